/** Minimal PCM-16 RIFF WAV reader plus linear resampling. */

import { readFileSync } from "node:fs";

export class AudioError extends Error {}
export class AudioTooShort extends AudioError {}

export interface AudioClip {
  samples: Float64Array;
  sampleRate: number;
}

export function readWav(path: string, channel = 0): AudioClip {
  const raw = readFileSync(path);
  if (raw.length < 12 || raw.toString("ascii", 0, 4) !== "RIFF" ||
      raw.toString("ascii", 8, 12) !== "WAVE") {
    throw new AudioError(`${path}: not a RIFF/WAVE file`);
  }
  let off = 12;
  let sampleRate = 0;
  let channels = 1;
  let bits = 0;
  let data: Buffer | null = null;
  while (off + 8 <= raw.length) {
    const chunkId = raw.toString("ascii", off, off + 4);
    const chunkLen = raw.readUInt32LE(off + 4);
    const body = raw.subarray(off + 8, off + 8 + chunkLen);
    if (chunkId === "fmt ") {
      channels = body.readUInt16LE(2);
      sampleRate = body.readUInt32LE(4);
      bits = body.readUInt16LE(14);
    } else if (chunkId === "data") {
      data = body;
    }
    off += 8 + chunkLen + (chunkLen % 2);
  }
  if (data === null || sampleRate === 0) {
    throw new AudioError(`${path}: missing fmt or data chunk`);
  }
  if (bits !== 16) {
    throw new AudioError(`${path}: only 16-bit PCM supported`);
  }
  const frames = Math.floor(data.length / (2 * channels));
  const samples = new Float64Array(frames);
  for (let i = 0; i < frames; i++) {
    samples[i] = data.readInt16LE(2 * (i * channels + channel)) / 32768;
  }
  return { samples, sampleRate };
}

export function sliceClip(clip: AudioClip, tStart: number,
                          tEnd: number): AudioClip {
  const a = Math.max(0, Math.round(tStart * clip.sampleRate));
  const b = Math.min(clip.samples.length, Math.round(tEnd * clip.sampleRate));
  if (b <= a) {
    throw new AudioTooShort(`empty slice [${tStart}, ${tEnd}]`);
  }
  return { samples: clip.samples.slice(a, b), sampleRate: clip.sampleRate };
}

export function resample(clip: AudioClip, targetRate: number): AudioClip {
  if (clip.sampleRate === targetRate) return clip;
  const ratio = clip.sampleRate / targetRate;
  const n = Math.floor(clip.samples.length / ratio);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const pos = i * ratio;
    const j = Math.floor(pos);
    const frac = pos - j;
    const a = clip.samples[j];
    const b = clip.samples[Math.min(j + 1, clip.samples.length - 1)];
    out[i] = a + frac * (b - a);
  }
  return { samples: out, sampleRate: targetRate };
}
