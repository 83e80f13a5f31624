"""Binary confusion counts and the four reported metrics.

Zero-denominator cases use the convention precision = 0 (no positive
predictions) and recall = 0 (no positive truth), so reports are always
renderable numbers rather than NaN. Percentages render with 2 decimals.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .featurestore import _atomic_write_bytes

SPLIT_TAGS = ("training", "validation", "test1", "test2")


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int
    positive_class: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    split: str

    def __post_init__(self):
        if self.split not in SPLIT_TAGS:
            raise InvalidInputError(f"split must be one of {SPLIT_TAGS}, got {self.split!r}")


def confusion(y_true: np.ndarray, y_pred: np.ndarray, positive_class: int) -> ConfusionMatrix:
    """Count the four cells; any prediction other than the positive class
    counts as a negative call."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise InvalidInputError("y_true and y_pred must be 1-D and the same length")
    if len(np.unique(y_true)) > 2:
        raise InvalidInputError("confusion counts are defined for two-class tasks only")
    true_pos = y_true == positive_class
    pred_pos = y_pred == positive_class
    return ConfusionMatrix(
        tp=int(np.sum(true_pos & pred_pos)),
        fp=int(np.sum(~true_pos & pred_pos)),
        fn=int(np.sum(true_pos & ~pred_pos)),
        tn=int(np.sum(~true_pos & ~pred_pos)),
        positive_class=positive_class,
    )


def compute_metrics(cm: ConfusionMatrix, split: str = "validation") -> MetricsReport:
    if cm.total == 0:
        raise InvalidInputError("cannot compute metrics for an empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if (cm.tp + cm.fp) > 0 else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if (cm.tp + cm.fn) > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return MetricsReport(accuracy=accuracy, precision=precision, recall=recall, f1=f1, split=split)


def _as_percent(value: float) -> str:
    return f"{100.0 * value:.2f}"


def render_metrics_csv(reports: list[MetricsReport]) -> str:
    lines = ["split,accuracy,precision,recall,f1"]
    for r in reports:
        lines.append(
            f"{r.split},{_as_percent(r.accuracy)},{_as_percent(r.precision)},"
            f"{_as_percent(r.recall)},{_as_percent(r.f1)}"
        )
    return "\n".join(lines) + "\n"


def render_metrics_table(reports: list[MetricsReport]) -> str:
    """Aligned text table, one row per split, percentages to 2 decimals."""
    header = ("split", "accuracy", "precision", "recall", "f1")
    rows = [
        (r.split, _as_percent(r.accuracy), _as_percent(r.precision), _as_percent(r.recall), _as_percent(r.f1))
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(header)]
    def fmt(cells):
        return "  ".join(c.ljust(widths[i]) for i, c in enumerate(cells)).rstrip()
    return "\n".join([fmt(header)] + [fmt(row) for row in rows]) + "\n"


def write_metrics_report(reports: list[MetricsReport], csv_path: str | Path, table_path: str | Path | None = None) -> None:
    _atomic_write_bytes(csv_path, render_metrics_csv(reports).encode("utf-8"))
    if table_path is not None:
        _atomic_write_bytes(table_path, render_metrics_table(reports).encode("utf-8"))
