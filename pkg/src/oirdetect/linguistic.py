"""Linguistic features over annotated tokens, within and across segments."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import RATIO_TAGS, Dataset, Segment
from .features import FeatureMatrix

COMMON_LEMMAS = ("wat", "kunnen", "zitten", "zijn", "nog", "wachten", "aan")
ANCHOR_BIGRAMS = (("PRON_Prs", "VERB"), ("VERB", "COREF"))
DEFAULT_BIGRAM_K = 20

# cross-segment features by temporal direction, for context-mode masking
PAST_CROSS_FEATURES = ("other_repetition_ratio", "coref_used_ratio")
FUTURE_CROSS_FEATURES = ("other_speaker_self_rep_ratio",
                         "other_speaker_other_rep_ratio")


class EmptySegment(Exception):
    pass


@dataclass(frozen=True)
class BigramVocabulary:
    bigrams: tuple[tuple[str, str], ...]
    source_hash: str

    def __post_init__(self):
        assert len(set(self.bigrams)) == len(self.bigrams)
        for anchor in ANCHOR_BIGRAMS:
            assert anchor in self.bigrams

    def feature_names(self) -> list[str]:
        return [f"bigram_{a}_{b}" for a, b in self.bigrams]

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps({"bigrams": [list(b) for b in self.bigrams],
                           "source_hash": self.source_hash})
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, text: str) -> "BigramVocabulary":
        obj = json.loads(text)
        return cls(tuple(tuple(b) for b in obj["bigrams"]), obj["source_hash"])


def effective_pos(token) -> str:
    """COREF-flagged tokens act as COREF in POS sequences (dual use)."""
    return "COREF" if token.is_coref else token.pos


def segment_bigrams(seg: Segment) -> list[tuple[str, str]]:
    tags = [effective_pos(t) for t in seg.tokens if not t.nonverbal]
    return list(zip(tags, tags[1:]))


def select_frequent_bigrams(train: Dataset, k: int = DEFAULT_BIGRAM_K
                            ) -> BigramVocabulary:
    """Top-k bigrams by document frequency over training segments; ties
    break lexicographically; anchors always included."""
    if k < 2:
        raise ValueError("k must be >= 2")
    df: dict[tuple[str, str], int] = {}
    for seg in train.segments:
        for bg in set(segment_bigrams(seg)):
            df[bg] = df.get(bg, 0) + 1
    ranked = sorted(df, key=lambda bg: (-df[bg], bg))
    chosen = ranked[:k]
    # anchors ride along beyond the budget when not already frequent
    chosen += [bg for bg in ANCHOR_BIGRAMS if bg not in chosen]
    ids = ",".join(s.segment_id for s in train.segments)
    source_hash = hashlib.sha256(ids.encode()).hexdigest()[:16]
    return BigramVocabulary(tuple(chosen), source_hash)


def segment_features(seg: Segment, vocab: BigramVocabulary
                     ) -> tuple[dict[str, float], dict[str, bool]]:
    """Within-segment features: bigram bits, tag ratios, lemma flags,
    question mark, non-verbal flags."""
    if not seg.tokens:
        raise EmptySegment(seg.segment_id)
    values: dict[str, float] = {}
    present = set(segment_bigrams(seg))
    for (a, b), name in zip(vocab.bigrams, vocab.feature_names()):
        values[name] = 1.0 if (a, b) in present else 0.0

    lexical = [t for t in seg.tokens if not t.nonverbal]
    n_lex = len(lexical)
    for tag in RATIO_TAGS:
        count = sum(1 for t in lexical if t.pos == tag)
        values[f"ratio_{tag}"] = count / n_lex if n_lex else 0.0

    lemmas = {t.lemma for t in lexical}
    for lemma in COMMON_LEMMAS:
        values[f"contains_{lemma}"] = 1.0 if lemma in lemmas else 0.0

    last_lex = next((t for t in reversed(seg.tokens) if not t.nonverbal), None)
    values["ends_with_question_mark"] = float(
        last_lex is not None and last_lex.text.endswith("?"))

    kinds = {t.nonverbal for t in seg.tokens if t.nonverbal}
    for kind in ("laugh", "sigh", "breath", "mouth_noise"):
        values[f"contains_{kind}"] = 1.0 if kind in kinds else 0.0

    return values, {n: True for n in values}


def _lemma_overlap_ratio(target: Segment, sources: list[Segment]) -> float:
    """Fraction of target lexical tokens whose lemma appears in sources."""
    tokens = target.lexical_tokens()
    if not tokens:
        return 0.0
    source_lemmas = {t.lemma for s in sources for t in s.lexical_tokens()
                     if t.lemma}
    hits = sum(1 for t in tokens if t.lemma and t.lemma in source_lemmas)
    return hits / len(tokens)


def other_repetition_ratio(seg: Segment, prior_turn: list[Segment]) -> float:
    """Share of this segment's lemmas repeated from the other speaker's
    previous turn; punctuation and non-verbal tokens excluded."""
    return _lemma_overlap_ratio(seg, prior_turn)


def coref_used_ratio(seg: Segment) -> float:
    lexical = seg.lexical_tokens()
    if not lexical:
        return 0.0
    return sum(1 for t in lexical if t.is_coref) / len(lexical)


def solution_repetition(ri: Segment, following_turn: list[Segment],
                        trouble_source: list[Segment]
                        ) -> tuple[float, float, bool]:
    """(self_rep, other_rep, present): repetition by the trouble-source
    speaker in the turn after the repair initiation."""
    if not following_turn:
        return 0.0, 0.0, False
    self_rep = float(np.mean([_lemma_overlap_ratio(s, trouble_source)
                              for s in following_turn]))
    other_rep = float(np.mean([_lemma_overlap_ratio(s, [ri])
                               for s in following_turn]))
    return self_rep, other_rep, True


LINGUISTIC_BASE_FEATURES = (
    tuple(f"ratio_{t}" for t in RATIO_TAGS)
    + tuple(f"contains_{l}" for l in COMMON_LEMMAS)
    + ("ends_with_question_mark",
       "contains_laugh", "contains_sigh", "contains_breath",
       "contains_mouth_noise",
       "other_repetition_ratio", "coref_used_ratio",
       "other_speaker_self_rep_ratio", "other_speaker_other_rep_ratio")
)


class LinguisticFeaturizer:
    """fit() selects the bigram vocabulary on training segments;
    transform() emits the canonical linguistic matrix."""

    def __init__(self, k: int = DEFAULT_BIGRAM_K):
        self.k = k
        self.vocab_: BigramVocabulary | None = None

    def fit(self, train: Dataset) -> "LinguisticFeaturizer":
        self.vocab_ = select_frequent_bigrams(train, self.k)
        return self

    @property
    def feature_names(self) -> tuple[str, ...]:
        assert self.vocab_ is not None, "fit first"
        return tuple(self.vocab_.feature_names()) + LINGUISTIC_BASE_FEATURES

    def transform(self, ds: Dataset) -> FeatureMatrix:
        assert self.vocab_ is not None, "fit first"
        rows: dict[str, tuple[dict, dict]] = {}
        for dialogue_id in ds.dialogue_ids():
            ordered = sorted(ds.dialogue_segments(dialogue_id),
                             key=lambda s: (s.t_start, s.segment_id))
            for idx, seg in enumerate(ordered):
                values, mask = segment_features(seg, self.vocab_)
                prior = prior_other_turn(ordered, idx)
                values["other_repetition_ratio"] = other_repetition_ratio(
                    seg, prior)
                values["coref_used_ratio"] = coref_used_ratio(seg)
                mask["other_repetition_ratio"] = True
                mask["coref_used_ratio"] = True
                following = following_other_turn(ordered, idx)
                self_rep, other_rep, ok = solution_repetition(
                    seg, following, prior)
                values["other_speaker_self_rep_ratio"] = self_rep
                values["other_speaker_other_rep_ratio"] = other_rep
                mask["other_speaker_self_rep_ratio"] = ok
                mask["other_speaker_other_rep_ratio"] = ok
                rows[seg.segment_id] = (values, mask)
        ordered_rows = {s.segment_id: rows[s.segment_id] for s in ds.segments}
        return FeatureMatrix.from_rows(self.feature_names, ordered_rows)


def prior_other_turn(ordered: list[Segment], idx: int) -> list[Segment]:
    """The other speaker's most recent full turn before segment idx."""
    seg = ordered[idx]
    for j in range(idx - 1, -1, -1):
        if ordered[j].speaker != seg.speaker:
            k = j
            while k > 0 and ordered[k - 1].speaker == ordered[j].speaker:
                k -= 1
            return ordered[k:j + 1]
    return []


def following_other_turn(ordered: list[Segment], idx: int) -> list[Segment]:
    """The other speaker's next full turn after segment idx."""
    seg = ordered[idx]
    for j in range(idx + 1, len(ordered)):
        if ordered[j].speaker != seg.speaker:
            k = j
            while k + 1 < len(ordered) \
                    and ordered[k + 1].speaker == ordered[j].speaker:
                k += 1
            return ordered[j:k + 1]
    return []
