"""Dialogue micro-context assembly around a target segment.

Neighbors are added alternately (previous, then following, per window
step), the output stays in chronological order, and segments that would
exceed the token budget are dropped whole, last-added first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import Segment

CLS, SEP, EOS = "[CLS]", "[SEP]", "[EOS]"
MODES = ("Past", "Future", "Current", "Full")
DEFAULT_MAX_TOKENS = 384


class IndexOutOfRange(Exception):
    pass


@dataclass(frozen=True)
class ContextConfig:
    mode: str = "Full"
    window: int | str = "max"   # integer or "max" (expand until budget)
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_tokens < 3:
            raise ValueError("max_tokens must be >= 3")
        if self.window != "max" and (not isinstance(self.window, int)
                                     or self.window < 0):
            raise ValueError("window must be a non-negative int or 'max'")


@dataclass(frozen=True)
class ContextSequence:
    tokens: tuple[str, ...]        # includes [CLS]/[SEP]/[EOS] markers
    segment_ids: tuple[str, ...]   # contributing segments, chronological

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def n_content_tokens(self) -> int:
        return sum(1 for t in self.tokens if t not in (CLS, SEP, EOS))


def _segment_tokens(seg: Segment) -> list[str]:
    return seg.transcript.split()


def assemble_micro_context(segments: list[Segment], i: int,
                           cfg: ContextConfig) -> ContextSequence:
    """Build the [CLS] ... [EOS] token sequence around segments[i].

    Expansion order is x_{i-1}, x_{i+1}, x_{i-2}, ... as the mode permits;
    markers are excluded from the max_tokens budget; the target segment is
    always fully present.
    """
    if not (0 <= i < len(segments)):
        raise IndexOutOfRange(f"index {i} for {len(segments)} segments")
    target = segments[i]
    included: list[int] = [i]
    budget = cfg.max_tokens - len(_segment_tokens(target))
    window = len(segments) if cfg.window == "max" else cfg.window
    if cfg.mode != "Current":
        for j in range(1, window + 1):
            stop = False
            candidates = []
            if cfg.mode in ("Past", "Full"):
                candidates.append(i - j)
            if cfg.mode in ("Future", "Full"):
                candidates.append(i + j)
            for k in candidates:
                if not (0 <= k < len(segments)):
                    continue
                cost = len(_segment_tokens(segments[k]))
                if cost > budget:
                    stop = True
                    break
                included.append(k)
                budget -= cost
            if stop:
                break

    included.sort()
    tokens: list[str] = [CLS]
    for pos, k in enumerate(included):
        if pos > 0:
            tokens.append(SEP)
        tokens.extend(_segment_tokens(segments[k]))
    tokens.append(EOS)
    return ContextSequence(tuple(tokens),
                           tuple(segments[k].segment_id for k in included))


def write_context_jsonl(rows: list[tuple[str, ContextSequence]],
                        path: str | Path) -> None:
    """Serialize (segment_id, context) pairs for the embedding exporter."""
    with open(path, "w", encoding="utf-8") as fh:
        for segment_id, ctx in rows:
            fh.write(json.dumps({"segment_id": segment_id,
                                 "context_text": ctx.text},
                                ensure_ascii=False) + "\n")


def select_cross_segment_features(cfg: ContextConfig, names, values, present):
    """Mask cross-segment features that the context mode excludes.

    Past keeps prior-turn features, Future keeps subsequent-turn ones,
    Current masks all cross-segment features, Full is the identity.
    Returns (values, present) copies.
    """
    from .linguistic import FUTURE_CROSS_FEATURES as LING_FUTURE
    from .linguistic import PAST_CROSS_FEATURES as LING_PAST
    from .prosody import FUTURE_CROSS_FEATURES as PROS_FUTURE
    from .prosody import PAST_CROSS_FEATURES as PROS_PAST

    past = set(LING_PAST) | set(PROS_PAST)
    future = set(LING_FUTURE) | set(PROS_FUTURE)
    if cfg.mode == "Full":
        masked: set[str] = set()
    elif cfg.mode == "Past":
        masked = future
    elif cfg.mode == "Future":
        masked = past
    else:
        masked = past | future

    values = values.copy()
    present = present.copy()
    for idx, name in enumerate(names):
        if name in masked:
            if values.ndim == 1:
                values[idx] = float("nan")
                present[idx] = False
            else:
                values[:, idx] = float("nan")
                present[:, idx] = False
    return values, present
