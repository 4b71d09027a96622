/** Batch export of text and audio EMB1 files from a corpus. */

import { readFileSync } from "node:fs";
import { dirname, isAbsolute, join } from "node:path";

import { readContexts, readCorpus, SegmentRecord } from "./corpus.js";
import { EmbeddingStore, saveEmbeddings } from "./emb1.js";
import {
  encodeAudio,
  encodeText,
  ModelPin,
  modelTag,
  requirePinned,
} from "./encoder.js";
import { readWav, sliceClip } from "./wav.js";

export interface LockFile {
  text?: ModelPin;
  audio?: ModelPin;
}

export interface ExportJob {
  corpusPath: string;
  contextPath?: string;
  outputPath: string;
  lockPath: string;
  audioRoot?: string;
  log?: (message: string) => void;
}

export function readLockFile(path: string): LockFile {
  return JSON.parse(readFileSync(path, "utf-8")) as LockFile;
}

export function exportTextEmbeddings(job: ExportJob): EmbeddingStore {
  const pin = requirePinned(readLockFile(job.lockPath).text, "text");
  if (!job.contextPath) {
    throw new Error("text export needs a context JSONL file");
  }
  const rows = readContexts(job.contextPath);
  const store = new EmbeddingStore("text", pin.hiddenSize, modelTag(pin));
  for (const row of rows) {
    store.put(row.segment_id, encodeText(pin, row.context_text));
  }
  saveEmbeddings(store, job.outputPath);
  job.log?.(`wrote ${store.size} text vectors (dim ${pin.hiddenSize})`);
  return store;
}

function classificationSegments(segments: SegmentRecord[]): SegmentRecord[] {
  return segments.filter((s) => s.role === "RI" || s.role === "RD");
}

export function exportAudioEmbeddings(job: ExportJob): EmbeddingStore {
  const pin = requirePinned(readLockFile(job.lockPath).audio, "audio");
  const segments = classificationSegments(readCorpus(job.corpusPath));
  const root = job.audioRoot ?? dirname(job.corpusPath);
  const store = new EmbeddingStore("audio", pin.hiddenSize, modelTag(pin));
  const cache = new Map<string, ReturnType<typeof readWav>>();
  for (const seg of segments) {
    const rel = seg.audio_ref.path;
    const wavPath = isAbsolute(rel) ? rel : join(root, rel);
    let wav = cache.get(wavPath);
    if (!wav) {
      wav = readWav(wavPath, seg.audio_ref.channel);
      cache.set(wavPath, wav);
    }
    const clip = sliceClip(wav, seg.t_start, seg.t_end);
    store.put(seg.segment_id, encodeAudio(pin, clip));
  }
  saveEmbeddings(store, job.outputPath);
  job.log?.(`wrote ${store.size} audio vectors (dim ${pin.hiddenSize})`);
  return store;
}
