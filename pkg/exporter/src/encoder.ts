/**
 * Deterministic local encoder backends.
 *
 * Stand-ins for the pinned pretrained checkpoints: every weight is
 * derived from the lock-file entry (id + version + revision), so a given
 * pin always produces the same vectors and changing the pin changes
 * them.  The text encoder reads context sequences and returns the
 * sequence-initial classification-position vector; the audio encoder
 * returns the time-mean over frame states of the clip.
 */

import { AudioClip, AudioTooShort, resample } from "./wav.js";

export interface ModelPin {
  id: string;
  version: string;
  revision: string;
  hiddenSize: number;
  pooling: string;
  sampleRate?: number;
}

export class ModelNotPinned extends Error {}

export function modelTag(pin: ModelPin): string {
  return `${pin.id}@${pin.version}+${pin.revision}#${pin.pooling}`;
}

export function requirePinned(pin: ModelPin | undefined,
                              kind: string): ModelPin {
  if (!pin || !pin.version || !pin.revision || !pin.hiddenSize) {
    throw new ModelNotPinned(
      `${kind} model is not pinned in models.lock.json`,
    );
  }
  return pin;
}

/* FNV-1a 64-bit over UTF-8 bytes, as a BigInt. */
function fnv1a(text: string): bigint {
  let h = 0xcbf29ce484222325n;
  for (const byte of Buffer.from(text, "utf-8")) {
    h ^= BigInt(byte);
    h = (h * 0x100000001b3n) & 0xffffffffffffffffn;
  }
  return h;
}

/* splitmix64 stream seeded by a string; yields floats in [-1, 1). */
function* stream(seed: string): Generator<number> {
  let state = fnv1a(seed);
  for (;;) {
    state = (state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    z ^= z >> 31n;
    yield Number(z >> 11n) / 2 ** 52 - 1;
  }
}

function hashedVector(seed: string, dim: number): Float64Array {
  const gen = stream(seed);
  const out = new Float64Array(dim);
  for (let i = 0; i < dim; i++) {
    out[i] = gen.next().value as number;
  }
  return out;
}

/* Context-module markers mapped onto the tokenizer's own specials. */
const MARKER_MAP: Record<string, string> = {
  "[CLS]": "<s>",
  "[SEP]": "</s>",
  "[EOS]": "</s>",
};

export function encodeText(pin: ModelPin, contextText: string): Float32Array {
  const dim = pin.hiddenSize;
  const tokens = contextText
    .split(/\s+/)
    .filter((t) => t.length > 0)
    .map((t) => MARKER_MAP[t] ?? t.toLowerCase());
  // recurrent mixing so the classification-position vector depends on
  // the whole sequence, not just the first token
  const state = hashedVector(`${modelTag(pin)}|init`, dim);
  for (let p = 0; p < tokens.length; p++) {
    const emb = hashedVector(`${modelTag(pin)}|tok|${tokens[p]}`, dim);
    const posPhase = 0.1 * (p + 1);
    for (let i = 0; i < dim; i++) {
      state[i] = Math.tanh(
        0.85 * state[i] + 0.6 * emb[i] + 0.05 * Math.sin(posPhase + i),
      );
    }
  }
  let norm = 0;
  for (const v of state) norm += v * v;
  norm = Math.sqrt(norm) || 1;
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) out[i] = state[i] / norm;
  return out;
}

const FRAME_S = 0.025;
const HOP_S = 0.01;
const MAX_CLIP_S = 30;
const PROBE_HZ = [250, 500, 1000, 2000];

/* Goertzel band power of one frame. */
function bandPower(frame: Float64Array, freq: number, rate: number): number {
  const w = (2 * Math.PI * freq) / rate;
  const coeff = 2 * Math.cos(w);
  let s0 = 0;
  let s1 = 0;
  let s2 = 0;
  for (const x of frame) {
    s0 = x + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  const p = s1 * s1 + s2 * s2 - coeff * s1 * s2;
  return Math.log10(p / frame.length + 1e-10);
}

export function encodeAudio(pin: ModelPin, clip: AudioClip): Float32Array {
  const rate = pin.sampleRate ?? 16000;
  const dim = pin.hiddenSize;
  if (clip.samples.length / clip.sampleRate < 0.1) {
    throw new AudioTooShort(
      `clip of ${(clip.samples.length / clip.sampleRate).toFixed(3)} s ` +
        "is below the 0.1 s minimum",
    );
  }
  let x = resample(clip, rate).samples;
  const maxSamples = MAX_CLIP_S * rate;
  if (x.length > maxSamples) {
    x = x.slice(0, maxSamples); // truncation per the model input contract
  }
  const win = Math.round(FRAME_S * rate);
  const hop = Math.round(HOP_S * rate);
  const nFrames = Math.max(1, 1 + Math.floor((x.length - win) / hop));

  // per-row projection weights derived from the pinned version
  const nFeat = 2 + PROBE_HZ.length;
  const weights: Float64Array[] = [];
  for (let i = 0; i < dim; i++) {
    weights.push(hashedVector(`${modelTag(pin)}|row|${i}`, nFeat + 1));
  }

  const mean = new Float64Array(dim);
  const frame = new Float64Array(win);
  for (let f = 0; f < nFrames; f++) {
    const start = f * hop;
    let energy = 0;
    let zc = 0;
    for (let i = 0; i < win; i++) {
      const s = start + i < x.length ? x[start + i] : 0; // zero padding
      frame[i] = s;
      energy += s * s;
      if (i > 0 && frame[i - 1] < 0 !== s < 0) zc++;
    }
    const feats = [
      Math.log10(energy / win + 1e-10),
      zc / win,
      ...PROBE_HZ.map((hz) => bandPower(frame, hz, rate)),
    ];
    for (let i = 0; i < dim; i++) {
      const w = weights[i];
      let acc = w[nFeat]; // bias
      for (let j = 0; j < nFeat; j++) acc += w[j] * feats[j];
      mean[i] += Math.tanh(acc);
    }
  }
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) out[i] = mean[i] / nFrames;
  return out;
}
