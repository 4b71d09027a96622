/** Readers for the corpus JSONL and context JSONL files. */

import { readFileSync } from "node:fs";

export interface TokenRecord {
  text: string;
  lemma: string;
  pos: string;
  is_coref: boolean;
  nonverbal: string | null;
  t_start: number | null;
  t_end: number | null;
}

export interface SegmentRecord {
  segment_id: string;
  dialogue_id: string;
  dyad_id: string;
  speaker: string;
  t_start: number;
  t_end: number;
  role: string;
  oir_type: string | null;
  sequence_id: string | null;
  audio_ref: { path: string; channel: number };
  tokens: TokenRecord[];
  transcript: string;
  split?: string;
}

export interface ContextRow {
  segment_id: string;
  context_text: string;
}

export class CorpusError extends Error {}

function parseLines<T>(path: string, what: string): T[] {
  const text = readFileSync(path, "utf-8");
  const rows: T[] = [];
  let lineno = 0;
  for (const line of text.split("\n")) {
    lineno++;
    if (line.trim() === "") continue;
    try {
      rows.push(JSON.parse(line) as T);
    } catch {
      throw new CorpusError(`${path}:${lineno}: malformed ${what} line`);
    }
  }
  return rows;
}

export function readCorpus(path: string): SegmentRecord[] {
  const rows = parseLines<SegmentRecord>(path, "segment");
  for (const row of rows) {
    if (!row.segment_id || !row.audio_ref) {
      throw new CorpusError(`${path}: segment missing required fields`);
    }
  }
  return rows;
}

export function readContexts(path: string): ContextRow[] {
  const rows = parseLines<ContextRow>(path, "context");
  for (const row of rows) {
    if (!row.segment_id || typeof row.context_text !== "string") {
      throw new CorpusError(`${path}: context row missing required fields`);
    }
  }
  return rows;
}
