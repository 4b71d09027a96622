"""Segment-keyed dense vector stores in the EMB1 binary format.

Layout: magic "EMB1", u16 version=1, u8 modality (0 text, 1 audio),
u8 reserved, u32 dim, u32 count, length-prefixed UTF-8 model tag, then
count records of [u16 id length, id bytes, dim float32 LE].  Records are
kept in canonical (id-sorted) order so serialization is byte-stable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
MODALITIES = ("text", "audio")


class EmbeddingError(Exception):
    pass


class BadMagic(EmbeddingError):
    pass


class DimMismatch(EmbeddingError):
    pass


class TruncatedFile(EmbeddingError):
    pass


class MissingSegment(EmbeddingError):
    pass


@dataclass
class EmbeddingStore:
    modality: str
    dim: int
    model_tag: str
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise EmbeddingError(f"unknown modality {self.modality!r}")

    def put(self, segment_id: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise DimMismatch(f"{segment_id}: got {vector.shape}, "
                              f"want ({self.dim},)")
        if not np.all(np.isfinite(vector)):
            raise EmbeddingError(f"{segment_id}: non-finite values")
        self.vectors[segment_id] = vector

    def get(self, segment_id: str, strict: bool = True) -> np.ndarray | None:
        """Stored vector; strict mode raises on absent ids, lenient mode
        returns None so the caller can drop the segment from the batch."""
        vec = self.vectors.get(segment_id)
        if vec is None and strict:
            raise MissingSegment(segment_id)
        return vec

    def __len__(self) -> int:
        return len(self.vectors)

    def matrix(self, ids: list[str]) -> np.ndarray:
        return np.stack([self.get(i) for i in ids])


def save_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    out = bytearray()
    out += MAGIC
    tag = store.model_tag.encode("utf-8")
    out += struct.pack("<HBBII", 1, MODALITIES.index(store.modality), 0,
                       store.dim, len(store.vectors))
    out += struct.pack("<H", len(tag)) + tag
    for sid in sorted(store.vectors):
        raw = sid.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += store.vectors[sid].astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_embeddings(path: str | Path) -> EmbeddingStore:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: magic {raw[:4]!r}")
    try:
        version, modality_byte, _res, dim, count = struct.unpack_from(
            "<HBBII", raw, 4)
        off = 16
        (tag_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        tag = raw[off:off + tag_len].decode("utf-8")
        off += tag_len
    except struct.error as exc:
        raise TruncatedFile(str(path)) from exc
    if version != 1:
        raise EmbeddingError(f"unsupported version {version}")
    if modality_byte >= len(MODALITIES):
        raise EmbeddingError(f"unknown modality byte {modality_byte}")
    store = EmbeddingStore(MODALITIES[modality_byte], dim, tag)
    for _ in range(count):
        if off + 2 > len(raw):
            raise TruncatedFile(str(path))
        (id_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        end = off + id_len + 4 * dim
        if end > len(raw):
            raise TruncatedFile(str(path))
        sid = raw[off:off + id_len].decode("utf-8")
        off += id_len
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=off).copy()
        off += 4 * dim
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"{sid}: non-finite values")
        store.vectors[sid] = vec
    return store
