"""Classification metrics, result tables, and false-negative reporting."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

POSITIVE = 1  # repair initiation


class LengthMismatch(Exception):
    pass


def _f1(prec: float, rec: float) -> float:
    return 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)


def compute_metrics(preds, golds) -> tuple[float, float, float]:
    """(precision, recall, macro F1) in percent.

    Precision/recall are for the positive (repair initiation) class;
    macro F1 averages both classes, scoring an absent class as 0 with a
    warning.
    """
    preds = np.asarray(preds).astype(int)
    golds = np.asarray(golds).astype(int)
    if preds.shape != golds.shape or preds.size == 0:
        raise LengthMismatch(f"{preds.shape} vs {golds.shape}")
    per_class_f1 = []
    pos_prec = pos_rec = 0.0
    for cls in (1, 0):
        tp = int(np.sum((preds == cls) & (golds == cls)))
        fp = int(np.sum((preds == cls) & (golds != cls)))
        fn = int(np.sum((preds != cls) & (golds == cls)))
        if tp + fp + fn == 0:
            warnings.warn(f"class {cls} absent from preds and golds; F1=0")
            per_class_f1.append(0.0)
            continue
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        per_class_f1.append(_f1(prec, rec))
        if cls == POSITIVE:
            pos_prec, pos_rec = prec, rec
    macro = float(np.mean(per_class_f1))
    return 100 * pos_prec, 100 * pos_rec, 100 * macro


@dataclass
class MetricsRow:
    model_tag: str
    context: str
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    f1_mean: float
    f1_std: float

    def render(self) -> str:
        return (f"{self.model_tag:<18} {self.context:<12} "
                f"{self.precision_mean:5.1f}±{self.precision_std:<4.1f} "
                f"{self.recall_mean:5.1f}±{self.recall_std:<4.1f} "
                f"{self.f1_mean:5.1f}±{self.f1_std:<4.1f}")


@dataclass
class MetricsTable:
    rows: list[MetricsRow] = field(default_factory=list)

    @staticmethod
    def aggregate(model_tag: str, context: str,
                  fold_metrics: list[tuple[float, float, float]]
                  ) -> MetricsRow:
        arr = np.asarray(fold_metrics, dtype=float)
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)  # population std across folds
        return MetricsRow(model_tag, context, mean[0], std[0],
                          mean[1], std[1], mean[2], std[2])

    def by_tag(self, model_tag: str, context: str | None = None) -> MetricsRow:
        for row in self.rows:
            if row.model_tag == model_tag and \
                    (context is None or row.context == context):
                return row
        raise KeyError((model_tag, context))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "context", "precision_mean",
                             "precision_std", "recall_mean", "recall_std",
                             "f1_mean", "f1_std"])
            for r in self.rows:
                writer.writerow([r.model_tag, r.context,
                                 f"{r.precision_mean:.4f}", f"{r.precision_std:.4f}",
                                 f"{r.recall_mean:.4f}", f"{r.recall_std:.4f}",
                                 f"{r.f1_mean:.4f}", f"{r.f1_std:.4f}"])

    def to_markdown(self) -> str:
        lines = ["| model | context | precision | recall | macro F1 |",
                 "|---|---|---|---|---|"]
        for r in self.rows:
            lines.append(
                f"| {r.model_tag} | {r.context} "
                f"| {r.precision_mean:.1f} ± {r.precision_std:.1f} "
                f"| {r.recall_mean:.1f} ± {r.recall_std:.1f} "
                f"| {r.f1_mean:.1f} ± {r.f1_std:.1f} |")
        return "\n".join(lines)


@dataclass
class FalseNegative:
    segment_id: str
    transcript: str
    probability: float
    oir_type: str | None
    deviant_features: list[tuple[str, float]]


@dataclass
class ErrorReport:
    fn_rate: float   # percent of gold-positive items missed
    instances: list[FalseNegative]
    per_type_counts: dict[str, int]

    def to_json(self, path: str | Path | None = None) -> str:
        obj = {
            "fn_rate": self.fn_rate,
            "per_type_counts": self.per_type_counts,
            "instances": [
                {"segment_id": i.segment_id, "transcript": i.transcript,
                 "probability": i.probability, "oir_type": i.oir_type,
                 "deviant_features": [[n, v] for n, v in i.deviant_features]}
                for i in self.instances],
        }
        text = json.dumps(obj, ensure_ascii=False, indent=2)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_markdown(self) -> str:
        lines = [f"# False negatives ({self.fn_rate:.1f}% of positives)", ""]
        for t, n in sorted(self.per_type_counts.items()):
            lines.append(f"- {t}: {n}")
        lines.append("")
        for i in self.instances:
            feats = ", ".join(f"{n}={v:+.2f}" for n, v in i.deviant_features)
            lines.append(f"- `{i.segment_id}` p={i.probability:.3f} "
                         f"({i.oir_type}): \"{i.transcript}\" [{feats}]")
        return "\n".join(lines)


def error_report(segment_ids, transcripts, oir_types, probabilities, golds,
                 feature_names=None, standardized=None,
                 threshold: float = 0.5, top_k: int = 5) -> ErrorReport:
    """Collect gold-positive items predicted negative, with their most
    deviant standardized feature values."""
    probabilities = np.asarray(probabilities, dtype=float)
    golds = np.asarray(golds).astype(int)
    preds = (probabilities >= threshold).astype(int)
    pos = golds == POSITIVE
    fn_mask = pos & (preds == 0)
    n_pos = int(pos.sum())
    fn_rate = 100.0 * fn_mask.sum() / n_pos if n_pos else 0.0
    instances = []
    per_type: dict[str, int] = {}
    for i in np.flatnonzero(fn_mask):
        deviant: list[tuple[str, float]] = []
        if feature_names is not None and standardized is not None:
            row = np.nan_to_num(standardized[i])
            order = np.argsort(-np.abs(row))[:top_k]
            deviant = [(feature_names[j], float(row[j])) for j in order]
        otype = oir_types[i]
        per_type[otype or "unknown"] = per_type.get(otype or "unknown", 0) + 1
        instances.append(FalseNegative(
            segment_id=segment_ids[i], transcript=transcripts[i],
            probability=float(probabilities[i]), oir_type=otype,
            deviant_features=deviant))
    return ErrorReport(fn_rate=fn_rate, instances=instances,
                       per_type_counts=per_type)
