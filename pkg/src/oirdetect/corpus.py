"""Corpus model and operations: parsing, validation, balancing, splitting.

The interchange format is JSON Lines with one object per segment (see
``serialize_corpus``).  Repair sequences are reconstructed from the
``sequence_id`` / ``role`` fields rather than stored separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

POS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN",
    "PRON_Dem", "PRON_Int", "PRON_Prs", "PUNCT", "SYM", "VERB",
    "COREF", "OTHER",
)
# The 14 tags whose per-segment frequency ratios are features; COREF and
# OTHER participate in bigrams only.
RATIO_TAGS = POS_TAGS[:14]

NONVERBAL_KINDS = ("laugh", "sigh", "breath", "mouth_noise")
ROLES = ("TS", "RI", "RS", "RD")
OIR_TYPES = ("OpenRequest", "RestrictedRequest", "RestrictedOffer")
SPLITS = ("train", "val", "test")


class CorpusError(Exception):
    """Base class for corpus-level failures."""


class MalformedRecord(CorpusError):
    def __init__(self, lineno: int, fieldname: str, detail: str = ""):
        self.lineno = lineno
        self.fieldname = fieldname
        msg = f"line {lineno}: bad field {fieldname!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DanglingSequenceRef(CorpusError):
    def __init__(self, sequence_id: str, detail: str):
        self.sequence_id = sequence_id
        super().__init__(f"sequence {sequence_id!r}: {detail}")


class InsufficientRD(CorpusError):
    pass


class EmptyClass(CorpusError):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    lemma: str = ""
    pos: str = "OTHER"
    is_coref: bool = False
    nonverbal: str | None = None
    t_start: float | None = None
    t_end: float | None = None

    def rendered(self) -> str:
        return f"#{self.nonverbal}#" if self.nonverbal else self.text


@dataclass(frozen=True)
class Segment:
    segment_id: str
    dialogue_id: str
    dyad_id: str
    speaker: str
    t_start: float
    t_end: float
    tokens: tuple[Token, ...]
    role: str
    oir_type: str | None = None
    sequence_id: str | None = None
    audio_path: str = ""
    audio_channel: int = 0

    @property
    def transcript(self) -> str:
        return " ".join(t.rendered() for t in self.tokens)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def lexical_tokens(self) -> list[Token]:
        """Tokens that count for repetition/ratio features."""
        return [t for t in self.tokens if t.pos != "PUNCT" and not t.nonverbal]


@dataclass(frozen=True)
class OirSequence:
    sequence_id: str
    ts_ids: tuple[str, ...]
    ri_ids: tuple[str, ...]
    rs_ids: tuple[str, ...]
    minimal: bool


@dataclass(frozen=True)
class Dataset:
    segments: tuple[Segment, ...]
    sequences: tuple[OirSequence, ...] = ()
    split_assignment: dict[str, str] | None = None

    def __post_init__(self):
        ids = [s.segment_id for s in self.segments]
        if len(ids) != len(set(ids)):
            raise CorpusError("duplicate segment ids")

    def by_id(self, segment_id: str) -> Segment:
        return self._index()[segment_id]

    def _index(self) -> dict[str, Segment]:
        # frozen dataclass: cache on the instance via object.__setattr__
        cached = self.__dict__.get("_idx")
        if cached is None:
            cached = {s.segment_id: s for s in self.segments}
            object.__setattr__(self, "_idx", cached)
        return cached

    def sequence_by_id(self, sequence_id: str) -> OirSequence:
        for seq in self.sequences:
            if seq.sequence_id == sequence_id:
                return seq
        raise KeyError(sequence_id)

    def classification_segments(self) -> list[Segment]:
        """RI and RD segments; TS/RS are context-only records."""
        return [s for s in self.segments if s.role in ("RI", "RD")]

    def dialogue_segments(self, dialogue_id: str) -> list[Segment]:
        return [s for s in self.segments if s.dialogue_id == dialogue_id]

    def dialogue_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.segments:
            seen.setdefault(s.dialogue_id, None)
        return list(seen)


@dataclass(frozen=True)
class Violation:
    sequence_id: str
    rule: str
    detail: str = ""


# ---------------------------------------------------------------------------
# Parsing / serialization

_REQUIRED_KEYS = ("segment_id", "dialogue_id", "dyad_id", "speaker",
                  "t_start", "t_end", "role", "audio_ref", "tokens",
                  "transcript")


def _parse_token(obj: dict, lineno: int) -> Token:
    if not isinstance(obj, dict) or "text" not in obj:
        raise MalformedRecord(lineno, "tokens", "token must be an object with text")
    pos = obj.get("pos", "OTHER")
    if pos not in POS_TAGS:
        raise MalformedRecord(lineno, "tokens.pos", f"unknown tag {pos!r}")
    nonverbal = obj.get("nonverbal")
    if nonverbal is not None and nonverbal not in NONVERBAL_KINDS:
        raise MalformedRecord(lineno, "tokens.nonverbal", f"unknown kind {nonverbal!r}")
    lemma = obj.get("lemma", "")
    if nonverbal is not None and lemma:
        raise MalformedRecord(lineno, "tokens.lemma", "nonverbal token with lemma")
    is_coref = bool(obj.get("is_coref", False))
    if pos == "COREF" and not is_coref:
        raise MalformedRecord(lineno, "tokens.is_coref", "COREF tag requires is_coref")
    ts, te = obj.get("t_start"), obj.get("t_end")
    if ts is not None and te is not None and ts > te:
        raise MalformedRecord(lineno, "tokens.t_start", "t_start > t_end")
    return Token(text=obj["text"], lemma=lemma, pos=pos, is_coref=is_coref,
                 nonverbal=nonverbal, t_start=ts, t_end=te)


def _parse_segment(obj: dict, lineno: int) -> tuple[Segment, str | None]:
    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise MalformedRecord(lineno, key, "missing")
    role = obj["role"]
    if role not in ROLES:
        raise MalformedRecord(lineno, "role", f"unknown role {role!r}")
    oir_type = obj.get("oir_type")
    if (role == "RI") != (oir_type is not None):
        raise MalformedRecord(lineno, "oir_type",
                              "present exactly when role is RI")
    if oir_type is not None and oir_type not in OIR_TYPES:
        raise MalformedRecord(lineno, "oir_type", f"unknown type {oir_type!r}")
    sequence_id = obj.get("sequence_id")
    if (role in ("TS", "RI", "RS")) != (sequence_id is not None):
        raise MalformedRecord(lineno, "sequence_id",
                              "present exactly when role is TS/RI/RS")
    t_start, t_end = obj["t_start"], obj["t_end"]
    if not (isinstance(t_start, (int, float)) and isinstance(t_end, (int, float))):
        raise MalformedRecord(lineno, "t_start", "not a number")
    if t_end <= t_start:
        raise MalformedRecord(lineno, "t_end", "t_end must exceed t_start")
    audio_ref = obj["audio_ref"]
    if not isinstance(audio_ref, dict) or "path" not in audio_ref:
        raise MalformedRecord(lineno, "audio_ref", "needs path and channel")
    tokens = tuple(_parse_token(t, lineno) for t in obj["tokens"])
    seg = Segment(
        segment_id=obj["segment_id"], dialogue_id=obj["dialogue_id"],
        dyad_id=obj["dyad_id"], speaker=obj["speaker"],
        t_start=float(t_start), t_end=float(t_end), tokens=tokens, role=role,
        oir_type=oir_type, sequence_id=sequence_id,
        audio_path=audio_ref["path"], audio_channel=int(audio_ref.get("channel", 0)),
    )
    if seg.transcript != obj["transcript"]:
        raise MalformedRecord(lineno, "transcript",
                              "does not match joined token texts")
    split = obj.get("split")
    if split is not None and split not in SPLITS:
        raise MalformedRecord(lineno, "split", f"unknown split {split!r}")
    return seg, split


def _derive_minimal(ri: Segment, last_ts: Segment,
                    dialogue: list[Segment]) -> bool:
    """Minimal iff the repair initiation's turn directly follows the turn
    holding the trouble source (anything in between is the TS speaker's
    own turn continuing)."""
    between = [s for s in dialogue
               if last_ts.t_start < s.t_start < ri.t_start
               and s.segment_id not in (last_ts.segment_id, ri.segment_id)]
    return all(s.speaker == last_ts.speaker for s in between)


def build_sequences(segments: list[Segment] | tuple[Segment, ...]) -> tuple[OirSequence, ...]:
    """Reconstruct OIR sequences from segment roles and sequence ids."""
    groups: dict[str, list[Segment]] = {}
    for s in segments:
        if s.sequence_id is not None:
            groups.setdefault(s.sequence_id, []).append(s)
    by_dialogue: dict[str, list[Segment]] = {}
    for s in segments:
        by_dialogue.setdefault(s.dialogue_id, []).append(s)
    for segs in by_dialogue.values():
        segs.sort(key=lambda s: (s.t_start, s.segment_id))

    sequences = []
    for seq_id in sorted(groups):
        members = sorted(groups[seq_id], key=lambda s: (s.t_start, s.segment_id))
        ts = [s for s in members if s.role == "TS"]
        ri = [s for s in members if s.role == "RI"]
        rs = [s for s in members if s.role == "RS"]
        if not ts:
            raise DanglingSequenceRef(seq_id, "no trouble-source segment")
        if not ri:
            raise DanglingSequenceRef(seq_id, "no repair-initiation segment")
        minimal = _derive_minimal(ri[0], ts[-1],
                                  by_dialogue[members[0].dialogue_id])
        sequences.append(OirSequence(
            sequence_id=seq_id,
            ts_ids=tuple(s.segment_id for s in ts),
            ri_ids=tuple(s.segment_id for s in ri),
            rs_ids=tuple(s.segment_id for s in rs),
            minimal=minimal,
        ))
    return tuple(sequences)


def parse_corpus(path: str | Path) -> Dataset:
    """Read a corpus JSONL file into a validated Dataset.

    Segments come back sorted by (dialogue_id, t_start).  Raises
    MalformedRecord / DanglingSequenceRef on schema violations.
    """
    segments: list[Segment] = []
    splits: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, "<json>", str(exc)) from exc
            seg, split = _parse_segment(obj, lineno)
            segments.append(seg)
            if split is not None:
                splits[seg.segment_id] = split
    segments.sort(key=lambda s: (s.dialogue_id, s.t_start, s.segment_id))
    sequences = build_sequences(segments)
    return Dataset(segments=tuple(segments), sequences=sequences,
                   split_assignment=splits or None)


def _token_obj(t: Token) -> dict:
    return {
        "text": t.text, "lemma": t.lemma, "pos": t.pos,
        "is_coref": t.is_coref, "nonverbal": t.nonverbal,
        "t_start": None if t.t_start is None else float(t.t_start),
        "t_end": None if t.t_end is None else float(t.t_end),
    }


def segment_record(seg: Segment, split: str | None = None) -> dict:
    obj = {
        "segment_id": seg.segment_id,
        "dialogue_id": seg.dialogue_id,
        "dyad_id": seg.dyad_id,
        "speaker": seg.speaker,
        "t_start": float(seg.t_start),
        "t_end": float(seg.t_end),
        "role": seg.role,
        "oir_type": seg.oir_type,
        "sequence_id": seg.sequence_id,
        "audio_ref": {"path": seg.audio_path, "channel": seg.audio_channel},
        "tokens": [_token_obj(t) for t in seg.tokens],
        "transcript": seg.transcript,
    }
    if split is not None:
        obj["split"] = split
    return obj


def serialize_corpus(ds: Dataset, path: str | Path | None = None) -> str:
    """Canonical JSONL rendering; byte-stable for identical datasets."""
    splits = ds.split_assignment or {}
    lines = [json.dumps(segment_record(s, splits.get(s.segment_id)),
                        ensure_ascii=False, separators=(",", ":"))
             for s in ds.segments]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# ---------------------------------------------------------------------------
# Validation

def validate_oir(ds: Dataset) -> list[Violation]:
    """Check OIR sequence well-formedness; violations are data, not errors."""
    out: list[Violation] = []
    for seq in ds.sequences:
        if not seq.ts_ids:
            out.append(Violation(seq.sequence_id, "MissingComponentViolation",
                                 "no trouble source"))
            continue
        if not seq.ri_ids:
            out.append(Violation(seq.sequence_id, "MissingComponentViolation",
                                 "no repair initiation"))
            continue
        try:
            ts = [ds.by_id(i) for i in seq.ts_ids]
            ri = [ds.by_id(i) for i in seq.ri_ids]
        except KeyError as exc:
            out.append(Violation(seq.sequence_id, "UnknownSegmentViolation",
                                 str(exc)))
            continue
        first_ts = min(ts, key=lambda s: s.t_start)
        for r in ri:
            if r.t_start < first_ts.t_start:
                out.append(Violation(seq.sequence_id, "OrderingViolation",
                                     f"RI {r.segment_id} precedes the trouble source"))
        for r in ri:
            if any(r.speaker == t.speaker for t in ts):
                out.append(Violation(seq.sequence_id, "SpeakerViolation",
                                     f"RI {r.segment_id} by the trouble-source speaker"))
    return out


# ---------------------------------------------------------------------------
# Balancing and splitting

def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation proportional to weights, summing to total."""
    if weights.sum() == 0:
        raise ValueError("no mass to allocate")
    quota = weights / weights.sum() * total
    counts = np.floor(quota).astype(int)
    short = total - counts.sum()
    # ties broken by index order for determinism
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def balance_dataset(ds: Dataset, target_rd_count: int, seed: int) -> Dataset:
    """Keep every repair initiation (with its sequence context) plus a
    per-dyad stratified sample of exactly target_rd_count RD segments."""
    rd = [s for s in ds.segments if s.role == "RD"]
    if len(rd) < target_rd_count:
        raise InsufficientRD(
            f"requested {target_rd_count} RD segments, only {len(rd)} available")
    dyads = sorted({s.dyad_id for s in rd})
    per_dyad = {d: sorted((s for s in rd if s.dyad_id == d),
                          key=lambda s: s.segment_id) for d in dyads}
    counts = _largest_remainder(
        np.array([len(per_dyad[d]) for d in dyads], dtype=float),
        target_rd_count)
    rng = np.random.default_rng(seed)
    kept_rd: set[str] = set()
    for d, n in zip(dyads, counts):
        pool = per_dyad[d]
        idx = rng.choice(len(pool), size=min(n, len(pool)), replace=False)
        kept_rd.update(pool[i].segment_id for i in sorted(idx))
    keep_seq = {s.sequence_id for s in ds.segments
                if s.role == "RI" and s.sequence_id}
    segments = tuple(
        s for s in ds.segments
        if (s.role == "RD" and s.segment_id in kept_rd)
        or (s.sequence_id in keep_seq))
    sequences = tuple(q for q in ds.sequences if q.sequence_id in keep_seq)
    return Dataset(segments=segments, sequences=sequences)


def split_dataset(ds: Dataset, ratios: tuple[float, float, float],
                  seed: int) -> Dataset:
    """Stratified train/val/test split, atomic per OIR sequence."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    # unit = one OIR sequence (all its segments) or one lone RD segment
    seq_members: dict[str, list[str]] = {}
    for s in ds.segments:
        if s.sequence_id is not None:
            seq_members.setdefault(s.sequence_id, []).append(s.segment_id)
    units: dict[str, list[tuple[str, list[str]]]] = {"RI": [], "RD": []}
    for seq_id in sorted(seq_members):
        units["RI"].append((seq_id, seq_members[seq_id]))
    for s in ds.segments:
        if s.sequence_id is None:
            units[s.role if s.role == "RD" else "RD"].append(
                (s.segment_id, [s.segment_id]))
    for cls, members in units.items():
        if not members:
            raise EmptyClass(f"class {cls} has no members")
    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for cls in ("RI", "RD"):
        members = units[cls]
        order = rng.permutation(len(members))
        counts = _largest_remainder(np.asarray(ratios, dtype=float),
                                    len(members))
        bounds = np.cumsum(counts)
        for rank, idx in enumerate(order):
            split = SPLITS[int(np.searchsorted(bounds, rank, side="right"))]
            for seg_id in members[idx][1]:
                assignment[seg_id] = split
    return replace(ds, split_assignment=assignment)
