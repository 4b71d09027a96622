"""Shapley-value attribution and cross-modality synergy scores.

Feature removal is simulated by substituting background values: the value
of a coalition S is the model output averaged over background rows with
the features in S taken from the explained instance.  Small feature sets
are solved by exact subset enumeration, larger ones by permutation
sampling (which preserves the efficiency property exactly).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

EXACT_LIMIT = 15


class ExplainError(Exception):
    pass


class EmptyBackground(ExplainError):
    pass


class SameModality(ExplainError):
    pass


def _coalition_value(predict_fn, x, background, member_mask) -> float:
    """Mean model output over background rows with coalition features
    replaced by the instance's values."""
    rows = background.copy()
    rows[:, member_mask] = x[member_mask]
    return float(np.mean(predict_fn(rows)))


def _validate(x, background):
    x = np.asarray(x, dtype=float)
    background = np.asarray(background, dtype=float)
    if background.ndim != 2 or background.shape[0] == 0:
        raise EmptyBackground("background must be a non-empty 2-D array")
    if background.shape[1] != x.shape[0]:
        raise ExplainError(f"background dim {background.shape[1]} != "
                           f"instance dim {x.shape[0]}")
    return x, background


def shap_values(predict_fn, x, background, n_samples: int = 200,
                seed: int = 0,
                force_sampled: bool = False) -> tuple[np.ndarray, float]:
    """Per-feature Shapley values and the base value (mean background
    output).  Exact for up to 15 features, permutation-sampled beyond;
    force_sampled selects the sampling estimator regardless of size."""
    x, background = _validate(x, background)
    n = x.shape[0]
    base = _coalition_value(predict_fn, x, background,
                            np.zeros(n, dtype=bool))
    if n <= EXACT_LIMIT and not force_sampled:
        phi = _shap_exact(predict_fn, x, background, n)
    else:
        phi = _shap_sampled(predict_fn, x, background, n, n_samples, seed)
    return phi, base


def _shap_exact(predict_fn, x, background, n) -> np.ndarray:
    # value of every coalition, indexed by bitmask
    values = np.empty(1 << n)
    mask = np.zeros(n, dtype=bool)
    for bits in range(1 << n):
        for f in range(n):
            mask[f] = bool(bits >> f & 1)
        values[bits] = _coalition_value(predict_fn, x, background, mask)
    sizes = np.array([bin(bits).count("1") for bits in range(1 << n)])
    # weight for adding feature i to a coalition of size s (i excluded)
    w = np.array([factorial(s) * factorial(n - s - 1) / factorial(n)
                  for s in range(n)])
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        without = np.flatnonzero((np.arange(1 << n) & bit) == 0)
        phi[i] = np.sum(w[sizes[without]]
                        * (values[without | bit] - values[without]))
    return phi


def _shap_sampled(predict_fn, x, background, n, n_samples, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    phi = np.zeros(n)
    mask = np.zeros(n, dtype=bool)
    for _ in range(n_samples):
        order = rng.permutation(n)
        mask[:] = False
        prev = _coalition_value(predict_fn, x, background, mask)
        for f in order:
            mask[f] = True
            cur = _coalition_value(predict_fn, x, background, mask)
            phi[f] += cur - prev
            prev = cur
    return phi / n_samples


def synergy(predict_fn, x, background, i: int, j: int, modalities,
            n_coalitions: int = 64, seed: int = 0) -> float:
    """Interaction strength of feature pair (i, j) across modalities:
    mean absolute mixed second difference of the coalition value over
    randomly sampled coalitions of the remaining features.

    Only cross-modality pairs are meaningful here; same-modality pairs
    raise SameModality.
    """
    x, background = _validate(x, background)
    n = x.shape[0]
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ExplainError(f"bad feature pair ({i}, {j})")
    if modalities[i] == modalities[j]:
        raise SameModality(f"features {i} and {j} are both {modalities[i]}")
    rng = np.random.default_rng(seed)
    others = [f for f in range(n) if f not in (i, j)]
    diffs = []
    for _ in range(n_coalitions):
        mask = np.zeros(n, dtype=bool)
        if others:
            mask[others] = rng.random(len(others)) < 0.5
        v00 = _coalition_value(predict_fn, x, background, mask)
        mask[i] = True
        v10 = _coalition_value(predict_fn, x, background, mask)
        mask[j] = True
        v11 = _coalition_value(predict_fn, x, background, mask)
        mask[i] = False
        v01 = _coalition_value(predict_fn, x, background, mask)
        diffs.append(abs(v11 - v10 - v01 + v00))
    return float(np.mean(diffs))


@dataclass
class Attribution:
    feature: str
    value: float
    shap: float


def top_k_report(names, phis, k: int = 10) -> list[Attribution]:
    """The k largest-magnitude attributions, descending."""
    phis = np.asarray(phis, dtype=float)
    order = np.argsort(-np.abs(phis))[:k]
    return [Attribution(feature=names[i], value=float("nan"),
                        shap=float(phis[i])) for i in order]


def cross_modality_synergies(predict_fn, x, background, names, modalities,
                             pair_modalities=("linguistic", "prosodic"),
                             n_coalitions: int = 32, seed: int = 0,
                             top_k: int = 10) -> list[tuple[str, str, float]]:
    """Synergy for every feature pair spanning the two given modalities,
    strongest first."""
    a_idx = [i for i, m in enumerate(modalities) if m == pair_modalities[0]]
    b_idx = [i for i, m in enumerate(modalities) if m == pair_modalities[1]]
    scored = []
    for i in a_idx:
        for j in b_idx:
            s = synergy(predict_fn, x, background, i, j, modalities,
                        n_coalitions=n_coalitions, seed=seed)
            scored.append((names[i], names[j], s))
    scored.sort(key=lambda t: -t[2])
    return scored[:top_k]
