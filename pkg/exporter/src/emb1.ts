/**
 * EMB1 binary embedding store.
 *
 * Layout: magic "EMB1", u16 version=1, u8 modality (0 text, 1 audio),
 * u8 reserved, u32 dim, u32 count, u16-length-prefixed UTF-8 model tag,
 * then count records of [u16 id length, id bytes, dim float32 LE].
 * Records are written in id-sorted order so output is byte-stable.
 */

import { readFileSync, writeFileSync } from "node:fs";

const MAGIC = Buffer.from("EMB1", "ascii");

export const MODALITIES = ["text", "audio"] as const;
export type Modality = (typeof MODALITIES)[number];

export class EmbeddingError extends Error {}
export class BadMagic extends EmbeddingError {}
export class DimMismatch extends EmbeddingError {}
export class TruncatedFile extends EmbeddingError {}

export class EmbeddingStore {
  readonly vectors = new Map<string, Float32Array>();

  constructor(
    readonly modality: Modality,
    readonly dim: number,
    readonly modelTag: string,
  ) {
    if (!MODALITIES.includes(modality)) {
      throw new EmbeddingError(`unknown modality ${modality}`);
    }
  }

  put(segmentId: string, vector: Float32Array): void {
    if (vector.length !== this.dim) {
      throw new DimMismatch(
        `${segmentId}: got ${vector.length}, want ${this.dim}`,
      );
    }
    for (const v of vector) {
      if (!Number.isFinite(v)) {
        throw new EmbeddingError(`${segmentId}: non-finite values`);
      }
    }
    this.vectors.set(segmentId, vector);
  }

  get size(): number {
    return this.vectors.size;
  }
}

export function serializeEmbeddings(store: EmbeddingStore): Buffer {
  const tag = Buffer.from(store.modelTag, "utf-8");
  const header = Buffer.alloc(16 + 2 + tag.length);
  MAGIC.copy(header, 0);
  header.writeUInt16LE(1, 4);
  header.writeUInt8(MODALITIES.indexOf(store.modality), 6);
  header.writeUInt8(0, 7);
  header.writeUInt32LE(store.dim, 8);
  header.writeUInt32LE(store.vectors.size, 12);
  header.writeUInt16LE(tag.length, 16);
  tag.copy(header, 18);

  const parts: Buffer[] = [header];
  const ids = [...store.vectors.keys()].sort();
  for (const id of ids) {
    const raw = Buffer.from(id, "utf-8");
    const rec = Buffer.alloc(2 + raw.length + 4 * store.dim);
    rec.writeUInt16LE(raw.length, 0);
    raw.copy(rec, 2);
    const vec = store.vectors.get(id)!;
    for (let i = 0; i < store.dim; i++) {
      rec.writeFloatLE(vec[i], 2 + raw.length + 4 * i);
    }
    parts.push(rec);
  }
  return Buffer.concat(parts);
}

export function saveEmbeddings(store: EmbeddingStore, path: string): void {
  writeFileSync(path, serializeEmbeddings(store));
}

export function loadEmbeddings(path: string): EmbeddingStore {
  const raw = readFileSync(path);
  if (raw.length < 4 || !raw.subarray(0, 4).equals(MAGIC)) {
    throw new BadMagic(`${path}: bad magic`);
  }
  if (raw.length < 18) {
    throw new TruncatedFile(path);
  }
  const version = raw.readUInt16LE(4);
  if (version !== 1) {
    throw new EmbeddingError(`unsupported version ${version}`);
  }
  const modalityByte = raw.readUInt8(6);
  if (modalityByte >= MODALITIES.length) {
    throw new EmbeddingError(`unknown modality byte ${modalityByte}`);
  }
  const dim = raw.readUInt32LE(8);
  const count = raw.readUInt32LE(12);
  const tagLen = raw.readUInt16LE(16);
  let off = 18;
  if (off + tagLen > raw.length) {
    throw new TruncatedFile(path);
  }
  const tag = raw.subarray(off, off + tagLen).toString("utf-8");
  off += tagLen;

  const store = new EmbeddingStore(MODALITIES[modalityByte], dim, tag);
  for (let r = 0; r < count; r++) {
    if (off + 2 > raw.length) {
      throw new TruncatedFile(path);
    }
    const idLen = raw.readUInt16LE(off);
    off += 2;
    if (off + idLen + 4 * dim > raw.length) {
      throw new TruncatedFile(path);
    }
    const id = raw.subarray(off, off + idLen).toString("utf-8");
    off += idLen;
    const vec = new Float32Array(dim);
    for (let i = 0; i < dim; i++) {
      vec[i] = raw.readFloatLE(off + 4 * i);
    }
    off += 4 * dim;
    store.put(id, vec);
  }
  return store;
}
