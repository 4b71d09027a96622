"""Named feature vectors/matrices with presence masks, plus CSV and the
PFV1 binary cache format."""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PFV1_MAGIC = b"PFV1"


class FeatureFormatError(Exception):
    pass


@dataclass
class FeatureMatrix:
    """Rows keyed by segment id; NaN values are absent and masked."""
    names: tuple[str, ...]
    ids: tuple[str, ...]
    values: np.ndarray   # (n_rows, n_features) float64, NaN = absent
    present: np.ndarray  # (n_rows, n_features) bool

    def __post_init__(self):
        assert self.values.shape == (len(self.ids), len(self.names))
        assert self.present.shape == self.values.shape

    def row(self, segment_id: str) -> dict[str, float]:
        i = self.ids.index(segment_id)
        return dict(zip(self.names, self.values[i]))

    def subset(self, ids: list[str]) -> "FeatureMatrix":
        idx = [self.ids.index(i) for i in ids]
        return FeatureMatrix(self.names, tuple(ids),
                             self.values[idx], self.present[idx])

    @classmethod
    def from_rows(cls, names: list[str] | tuple[str, ...],
                  rows: dict[str, tuple[dict[str, float], dict[str, bool]]]
                  ) -> "FeatureMatrix":
        names = tuple(names)
        ids = tuple(rows)
        values = np.full((len(ids), len(names)), np.nan)
        present = np.zeros((len(ids), len(names)), dtype=bool)
        for r, sid in enumerate(ids):
            vals, mask = rows[sid]
            for c, name in enumerate(names):
                if name in vals and mask.get(name, False) \
                        and np.isfinite(vals[name]):
                    values[r, c] = vals[name]
                    present[r, c] = True
        return cls(names, ids, values, present)


def write_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_id", *matrix.names])
        for i, sid in enumerate(matrix.ids):
            row = ["" if not matrix.present[i, j] else repr(float(v))
                   for j, v in enumerate(matrix.values[i])]
            writer.writerow([sid, *row])


def read_csv(path: str | Path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = tuple(header[1:])
        ids, vals, pres = [], [], []
        for row in reader:
            ids.append(row[0])
            vals.append([float(v) if v else np.nan for v in row[1:]])
            pres.append([bool(v) for v in row[1:]])
    return FeatureMatrix(names, tuple(ids),
                         np.asarray(vals, dtype=float),
                         np.asarray(pres, dtype=bool))


def write_pfv1(matrix: FeatureMatrix, path: str | Path) -> None:
    """Compact cache: magic, feature-name table, float32 rows + mask bytes."""
    buf = io.BytesIO()
    buf.write(PFV1_MAGIC)
    buf.write(struct.pack("<HII", 1, len(matrix.names), len(matrix.ids)))
    for name in matrix.names:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)) + raw)
    for i, sid in enumerate(matrix.ids):
        raw = sid.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)) + raw)
        row = np.nan_to_num(matrix.values[i], nan=0.0).astype("<f4")
        buf.write(row.tobytes())
        buf.write(matrix.present[i].astype(np.uint8).tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_pfv1(path: str | Path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != PFV1_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {raw[:4]!r}")
    off = 4
    version, n_feat, count = struct.unpack_from("<HII", raw, off)
    off += 10
    if version != 1:
        raise FeatureFormatError(f"unsupported PFV version {version}")

    def read_str(off):
        (n,) = struct.unpack_from("<H", raw, off)
        s = raw[off + 2:off + 2 + n].decode("utf-8")
        return s, off + 2 + n

    names = []
    for _ in range(n_feat):
        s, off = read_str(off)
        names.append(s)
    ids, values, present = [], [], []
    for _ in range(count):
        s, off = read_str(off)
        ids.append(s)
        vals = np.frombuffer(raw, dtype="<f4", count=n_feat, offset=off)
        off += 4 * n_feat
        mask = np.frombuffer(raw, dtype=np.uint8, count=n_feat, offset=off)
        off += n_feat
        values.append(vals.astype(float))
        present.append(mask.astype(bool))
    values = np.asarray(values)
    present = np.asarray(present)
    values[~present] = np.nan
    return FeatureMatrix(tuple(names), tuple(ids), values, present)
