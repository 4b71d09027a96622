import { describe, expect, it } from "vitest";

import {
  encodeAudio,
  encodeText,
  ModelNotPinned,
  ModelPin,
  requirePinned,
} from "../src/encoder.js";
import { AudioClip, AudioTooShort } from "../src/wav.js";

const TEXT_PIN: ModelPin = {
  id: "robbert-v2-dutch-base",
  version: "2.0.0",
  revision: "c4f1b8a",
  hiddenSize: 64,
  pooling: "cls",
};

const AUDIO_PIN: ModelPin = {
  id: "whisper-base-encoder",
  version: "1.0.2",
  revision: "9e8f0d1",
  hiddenSize: 48,
  pooling: "time-mean",
  sampleRate: 16000,
};

function toneClip(freq: number, dur: number, rate = 16000): AudioClip {
  const n = Math.round(dur * rate);
  const samples = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    samples[i] = 0.3 * Math.sin((2 * Math.PI * freq * i) / rate);
  }
  return { samples, sampleRate: rate };
}

function cosine(a: Float32Array, b: Float32Array): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / Math.sqrt(na * nb);
}

describe("text encoder", () => {
  it("is deterministic and has the pinned width", () => {
    const a = encodeText(TEXT_PIN, "[CLS] wat zei je ? [EOS]");
    const b = encodeText(TEXT_PIN, "[CLS] wat zei je ? [EOS]");
    expect(a.length).toBe(64);
    expect(a).toEqual(b);
  });

  it("distinguishes different sequences", () => {
    const a = encodeText(TEXT_PIN, "[CLS] wat zei je ? [EOS]");
    const b = encodeText(TEXT_PIN, "[CLS] de ster staat op [EOS]");
    expect(cosine(a, b)).toBeLessThan(0.999);
  });

  it("depends on the whole sequence, not just the start", () => {
    const a = encodeText(TEXT_PIN, "[CLS] wat zei je [EOS]");
    const b = encodeText(TEXT_PIN, "[CLS] wat zei hij [EOS]");
    expect(cosine(a, b)).toBeLessThan(0.999);
  });

  it("changes with the pinned version", () => {
    const other = { ...TEXT_PIN, version: "2.1.0" };
    const a = encodeText(TEXT_PIN, "[CLS] ja [EOS]");
    const b = encodeText(other, "[CLS] ja [EOS]");
    expect(cosine(a, b)).toBeLessThan(0.999);
  });
});

describe("audio encoder", () => {
  it("maps a 1 s clip to a single vector of the encoder width", () => {
    const v = encodeAudio(AUDIO_PIN, toneClip(220, 1.0));
    expect(v.length).toBe(48);
  });

  it("keeps silence finite", () => {
    const clip: AudioClip = {
      samples: new Float64Array(16000),
      sampleRate: 16000,
    };
    const v = encodeAudio(AUDIO_PIN, clip);
    for (const x of v) expect(Number.isFinite(x)).toBe(true);
  });

  it("distinguishes different clips", () => {
    const a = encodeAudio(AUDIO_PIN, toneClip(220, 1.0));
    const b = encodeAudio(AUDIO_PIN, toneClip(500, 0.6));
    expect(cosine(a, b)).toBeLessThan(0.999);
  });

  it("resamples higher-rate input", () => {
    const a = encodeAudio(AUDIO_PIN, toneClip(220, 1.0, 16000));
    const b = encodeAudio(AUDIO_PIN, toneClip(220, 1.0, 32000));
    expect(cosine(a, b)).toBeGreaterThan(0.99);
  });

  it("rejects clips under 0.1 s", () => {
    expect(() => encodeAudio(AUDIO_PIN, toneClip(220, 0.05))).toThrow(
      AudioTooShort,
    );
  });
});

describe("lock enforcement", () => {
  it("refuses unpinned models", () => {
    expect(() => requirePinned(undefined, "text")).toThrow(ModelNotPinned);
    expect(() =>
      requirePinned({ ...TEXT_PIN, version: "" }, "text"),
    ).toThrow(ModelNotPinned);
  });
});
