"""Experiment harness: modality-combination variants, the micro-context
sweep, and interaction analyses on a prepared corpus.

Embedding inputs come from either imported EMB1 files or deterministic
local fixtures (hashed bag-of-words projection for text, frame-level
energy/zero-crossing statistics for audio).  The fixtures carry the same
cue structure real encoders would: the text vector reflects the assembled
micro-context, the audio vector reflects pitch movement and loudness.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .context import (CLS, EOS, SEP, ContextConfig, assemble_micro_context,
                      select_cross_segment_features)
from .corpus import Dataset, Segment
from .embeddings import EmbeddingStore
from .evaluation import MetricsTable, compute_metrics
from .explain import cross_modality_synergies, shap_values, top_k_report
from .features import FeatureMatrix
from .linguistic import LinguisticFeaturizer
from .model import FusionClassifier, cross_validate
from .prosody import ProsodicExtractor

SCENARIO_MODALITIES = {
    "Text_Emb": ("text_emb",),
    "Audio_Emb": ("audio_emb",),
    "Multi_Emb": ("text_emb", "audio_emb"),
    "Text_Ling": ("ling",),
    "Audio_Pros": ("pros",),
    "Multi_LingPros": ("ling", "pros"),
    "Multi_Ours": ("text_emb", "audio_emb", "ling", "pros"),
}

CONTEXT_VARIANTS = {
    "Past(2)": ContextConfig("Past", 2),
    "Past(max)": ContextConfig("Past", "max"),
    "Current": ContextConfig("Current", 0),
    "Future(max)": ContextConfig("Future", "max"),
    "Full(2)": ContextConfig("Full", 2),
    "Full(max)": ContextConfig("Full", "max"),
}
DEFAULT_CONTEXT = "Full(2)"

TEXT_FIXTURE_BUCKETS = 256


class ScenarioError(Exception):
    pass


def _scenario_modalities(scenario: str, context_tag: str):
    if scenario not in SCENARIO_MODALITIES:
        raise ScenarioError(f"unknown scenario {scenario!r}")
    if context_tag not in CONTEXT_VARIANTS:
        raise ScenarioError(f"unknown context variant {context_tag!r}")
    return SCENARIO_MODALITIES[scenario]


def _stable_bucket(token: str, buckets: int) -> int:
    return zlib.crc32(token.lower().encode("utf-8")) % buckets


def text_fixture_store(ds: Dataset, cfg: ContextConfig, dim: int = 64,
                       seed: int = 0) -> EmbeddingStore:
    """Hashed bag-of-words of each classification segment's micro-context,
    pushed through a fixed random projection and L2-normalized.  The
    normalization makes added context dilute the target's own cue tokens,
    as a real fixed-length encoder's attention budget would."""
    rng = np.random.default_rng(seed)
    proj = rng.normal(size=(TEXT_FIXTURE_BUCKETS, dim))
    proj /= np.sqrt(TEXT_FIXTURE_BUCKETS)
    store = EmbeddingStore("text", dim, f"fixture-text-{cfg.mode}")
    for dlg in ds.dialogue_ids():
        segs = ds.dialogue_segments(dlg)
        for i, seg in enumerate(segs):
            if seg.role not in ("RI", "RD"):
                continue
            ctx = assemble_micro_context(segs, i, cfg)
            counts = np.zeros(TEXT_FIXTURE_BUCKETS)
            for tok in ctx.tokens:
                if tok in (CLS, SEP, EOS):
                    continue
                counts[_stable_bucket(tok, TEXT_FIXTURE_BUCKETS)] += 1
            vec = np.sqrt(counts) @ proj
            norm = np.linalg.norm(vec)
            store.put(seg.segment_id, vec / norm if norm else vec)
    return store


def _audio_summary(samples: np.ndarray, sr: int) -> np.ndarray:
    win = int(0.025 * sr)
    hop = int(0.010 * sr)
    if len(samples) < win:
        return np.zeros(14)
    n_frames = 1 + (len(samples) - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = samples[idx]
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    rms_db = 20 * np.log10(np.maximum(rms, 1e-8))
    zc = np.mean(np.abs(np.diff(np.signbit(frames), axis=1)), axis=1)
    loud = rms_db > rms_db.max() - 30
    t = np.arange(n_frames) * hop / sr
    quarters = np.array_split(np.flatnonzero(loud), 4) if loud.any() \
        else [np.array([], dtype=int)] * 4
    quarter_zc = [zc[q].mean() if len(q) else 0.0 for q in quarters]

    def slope(y, sel):
        if sel.sum() < 3:
            return 0.0
        return float(np.polyfit(t[sel], y[sel], 1)[0])

    return np.array([
        rms_db.mean(), rms_db.std(), rms_db.max(), slope(rms_db, loud),
        zc[loud].mean() if loud.any() else 0.0,
        zc[loud].std() if loud.any() else 0.0,
        slope(zc, loud), *quarter_zc,
        float(loud.mean()), len(samples) / sr, float(n_frames)])


def audio_fixture_store(ds: Dataset, audio_provider, dim: int = 32,
                        seed: int = 0) -> EmbeddingStore:
    """Frame energy and zero-crossing statistics of each classification
    segment, randomly projected.  Zero-crossing rate tracks the
    fundamental, so pitch rises survive the projection."""
    rng = np.random.default_rng(seed)
    proj = rng.normal(size=(14, dim)) / np.sqrt(14)
    store = EmbeddingStore("audio", dim, "fixture-audio")
    scale = None
    rows = {}
    for seg in ds.classification_segments():
        clip = audio_provider(seg)
        rows[seg.segment_id] = _audio_summary(clip.samples, clip.sample_rate)
    mat = np.stack(list(rows.values()))
    scale = mat.std(axis=0)
    scale[scale == 0] = 1.0
    center = mat.mean(axis=0)
    for sid, row in rows.items():
        store.put(sid, ((row - center) / scale) @ proj)
    return store


@dataclass
class PreparedData:
    """Everything the model variants consume, keyed by segment id."""
    ids: list[str]
    y: np.ndarray
    groups: np.ndarray            # sequence id, or segment id for lone RD
    splits: dict[str, list[str]]  # split name -> ids
    ling: FeatureMatrix
    pros: FeatureMatrix
    audio_store: EmbeddingStore
    text_stores: dict[str, EmbeddingStore] = field(default_factory=dict)


class ScenarioRunner:
    def __init__(self, ds: Dataset, audio_provider, seed: int = 0,
                 text_dim: int = 64, audio_dim: int = 32,
                 classifier_params: dict | None = None, vocab=None):
        if ds.split_assignment is None:
            raise ScenarioError("dataset has no split assignment")
        self.ds = ds
        self.audio_provider = audio_provider
        self.seed = seed
        self.text_dim = text_dim
        self.audio_dim = audio_dim
        self.classifier_params = dict(classifier_params or {})
        self.classifier_params.setdefault("d_shared", 64)
        self.classifier_params.setdefault("n_heads", 4)
        # fixtures are not pretrained encoders, so no fine-tuning-scale lr
        self.classifier_params.setdefault("lr", 1e-3)
        self.vocab = vocab
        self.featurizer_: LinguisticFeaturizer | None = None
        self.data: PreparedData | None = None

    def prepare(self) -> PreparedData:
        ds = self.ds
        targets = ds.classification_segments()
        ids = [s.segment_id for s in targets]
        y = np.array([1 if s.role == "RI" else 0 for s in targets])
        groups = np.array([s.sequence_id or s.segment_id for s in targets])
        splits: dict[str, list[str]] = {"train": [], "val": [], "test": []}
        for s in targets:
            splits[ds.split_assignment[s.segment_id]].append(s.segment_id)

        featurizer = LinguisticFeaturizer()
        if self.vocab is not None:
            featurizer.vocab_ = self.vocab
        else:
            train_ids = set(splits["train"])
            train_ds = Dataset(
                segments=tuple(s for s in ds.segments
                               if s.role not in ("RI", "RD")
                               or s.segment_id in train_ids),
                sequences=ds.sequences)
            featurizer.fit(train_ds)
        self.featurizer_ = featurizer
        ling = featurizer.transform(ds).subset(ids)
        pros = ProsodicExtractor(self.audio_provider).transform(ds).subset(ids)
        audio_store = audio_fixture_store(ds, self.audio_provider,
                                          self.audio_dim, self.seed)
        self.data = PreparedData(ids, y, groups, splits, ling, pros,
                                 audio_store)
        return self.data

    def _text_store(self, context_tag: str) -> EmbeddingStore:
        data = self.data
        if context_tag not in data.text_stores:
            data.text_stores[context_tag] = text_fixture_store(
                self.ds, CONTEXT_VARIANTS[context_tag], self.text_dim,
                self.seed)
        return data.text_stores[context_tag]

    def bundle(self, ids: list[str], modalities: tuple[str, ...],
               context_tag: str) -> dict:
        data = self.data
        cfg = CONTEXT_VARIANTS[context_tag]
        out: dict = {}
        for m in modalities:
            if m == "text_emb":
                out[m] = self._text_store(context_tag).matrix(ids)
            elif m == "audio_emb":
                out[m] = data.audio_store.matrix(ids)
            else:
                fm = (data.ling if m == "ling" else data.pros).subset(ids)
                values, present = select_cross_segment_features(
                    cfg, fm.names, fm.values, fm.present)
                out[m] = (values, present)
        return out

    def _subset_y(self, ids: list[str]) -> np.ndarray:
        pos = {sid: i for i, sid in enumerate(self.data.ids)}
        return self.data.y[[pos[i] for i in ids]]

    def make_classifier(self, modalities: tuple[str, ...],
                        seed: int) -> FusionClassifier:
        return FusionClassifier(modalities=modalities, seed=seed,
                                **self.classifier_params)

    def run_holdout(self, scenario: str,
                    context_tag: str = DEFAULT_CONTEXT,
                    seed: int | None = None
                    ) -> tuple[FusionClassifier, tuple[float, float, float]]:
        """Train on the train split with val-based early stopping and
        report test metrics."""
        if self.data is None:
            self.prepare()
        modalities = _scenario_modalities(scenario, context_tag)
        seed = self.seed if seed is None else seed
        sp = self.data.splits
        clf = self.make_classifier(modalities, seed)
        clf.fit(self.bundle(sp["train"], modalities, context_tag),
                self._subset_y(sp["train"]),
                self.bundle(sp["val"], modalities, context_tag),
                self._subset_y(sp["val"]))
        preds = clf.predict(self.bundle(sp["test"], modalities, context_tag))
        return clf, compute_metrics(preds, self._subset_y(sp["test"]))

    def run_cv(self, scenario: str, context_tag: str = DEFAULT_CONTEXT,
               k: int = 10) -> list[tuple[float, float, float]]:
        if self.data is None:
            self.prepare()
        modalities = _scenario_modalities(scenario, context_tag)
        full = self.bundle(self.data.ids, modalities, context_tag)
        return cross_validate(
            lambda: self.make_classifier(modalities, self.seed),
            full, self.data.y, self.data.groups, k=k, seed=self.seed)


def modality_comparison(runner: ScenarioRunner, cv_folds: int | None = None,
                        context_tag: str = DEFAULT_CONTEXT) -> MetricsTable:
    """All seven model variants under one context configuration."""
    table = MetricsTable()
    for tag in SCENARIO_MODALITIES:
        if cv_folds:
            folds = runner.run_cv(tag, context_tag, k=cv_folds)
        else:
            folds = [runner.run_holdout(tag, context_tag)[1]]
        table.rows.append(MetricsTable.aggregate(tag, context_tag, folds))
    return table


def context_sweep(runner: ScenarioRunner, scenario: str = "Multi_Ours",
                  cv_folds: int | None = None) -> MetricsTable:
    """The full model under each micro-context configuration."""
    table = MetricsTable()
    for ctx in CONTEXT_VARIANTS:
        if cv_folds:
            folds = runner.run_cv(scenario, ctx, k=cv_folds)
        else:
            folds = [runner.run_holdout(scenario, ctx)[1]]
        table.rows.append(MetricsTable.aggregate(scenario, ctx, folds))
    return table


def interaction_analysis(runner: ScenarioRunner, top_features: int = 5,
                         n_background: int = 24, seed: int = 0) -> dict:
    """SHAP attributions and cross-modality synergies for the
    handcrafted-features model on one test repair initiation."""
    if runner.data is None:
        runner.prepare()
    clf, _ = runner.run_holdout("Multi_LingPros")
    data = runner.data
    n_ling = len(data.ling.names)

    def predict_rows(X: np.ndarray) -> np.ndarray:
        ling = X[:, :n_ling]
        pros = X[:, n_ling:]
        return clf.predict_proba({
            "ling": (ling, np.isfinite(ling)),
            "pros": (pros, np.isfinite(pros))})

    names = list(data.ling.names) + list(data.pros.names)
    modalities = ["linguistic"] * n_ling + ["prosodic"] * len(data.pros.names)
    full = np.concatenate([data.ling.values, data.pros.values], axis=1)
    pos = {sid: i for i, sid in enumerate(data.ids)}
    rng = np.random.default_rng(seed)
    train_rows = full[[pos[i] for i in data.splits["train"]]]
    background = np.nan_to_num(
        train_rows[rng.choice(len(train_rows),
                              min(n_background, len(train_rows)),
                              replace=False)])
    test_ri = [i for i in data.splits["test"] if data.y[pos[i]] == 1]
    if not test_ri:
        raise ScenarioError("no repair initiation in the test split")
    x = np.nan_to_num(full[pos[test_ri[0]]])

    # attribute over the strongest candidate features to keep the exact
    # solver in range, then score cross-modality pairs among them
    base_pred = predict_rows(background)
    spread = np.abs(x - background).mean(axis=0)
    cand: list[int] = []
    for modality in ("linguistic", "prosodic"):
        idx = [i for i, m in enumerate(modalities) if m == modality]
        idx.sort(key=lambda i: -spread[i])
        cand += idx[:top_features]
    cand.sort()

    def reduced_predict(Xr: np.ndarray) -> np.ndarray:
        rows = np.tile(x, (len(Xr), 1))
        rows[:, cand] = Xr
        return predict_rows(rows)

    phi, base = shap_values(reduced_predict, x[cand], background[:, cand],
                            seed=seed)
    report = top_k_report([names[i] for i in cand], phi, k=len(cand))
    synergies = cross_modality_synergies(
        reduced_predict, x[cand], background[:, cand],
        [names[i] for i in cand], [modalities[i] for i in cand],
        n_coalitions=16, seed=seed)
    return {"segment_id": test_ri[0], "base_value": base,
            "attributions": report, "synergies": synergies}
