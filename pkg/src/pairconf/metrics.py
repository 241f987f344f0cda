"""
Evaluation reports: top-1 accuracy, the train-eval gap Δ, per-class accuracy
statistics and false-positive / false-negative rates.

Every report is computed from single-branch predictions (argmax of the softmax
output, ties broken toward the lowest class index) and keeps the full
confusion matrix it was derived from. Field names of the JSON and CSV forms
are listed in ``docs/reports.rst``.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from pairconf.datasets import Dataset
from pairconf.tensor import NetworkParams, predict

logger = logging.getLogger(__name__)

SUMMARY_FIELDS = (
    "top1",
    "delta_gap",
    "class_best",
    "class_worst",
    "class_mean",
    "class_std",
    "fp_rate",
    "fn_rate",
)

_ORDER_SLACK = 1e-12


@dataclass(frozen=True)
class ClassStats:
    """Best, worst, mean and population std of per-class accuracy."""

    best: float
    worst: float
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not self.worst - _ORDER_SLACK <= self.mean <= self.best + _ORDER_SLACK:
            raise ValueError(
                f"class stats out of order: worst={self.worst}, mean={self.mean}, best={self.best}"
            )
        if self.std < 0:
            raise ValueError(f"std must be non-negative, got {self.std}")

    @classmethod
    def of(cls, accuracies: Sequence[float]) -> "ClassStats":
        values = np.asarray(accuracies, dtype=np.float64)
        if values.size == 0:
            raise ValueError("no per-class accuracies to summarize")
        return cls(
            best=float(values.max()),
            worst=float(values.min()),
            mean=float(values.mean()),
            std=float(values.std(ddof=0)),
        )


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """
    Evaluation of one model on one dataset.

    ``per_class`` covers the classes present in the evaluated set;
    ``delta_gap`` is train minus eval top-1 in percentage points and is
    ``None`` when no training set was scored. ``fp_rate`` is the mean over all
    classes of FP_c / (m − m_c); ``fn_rate`` the mean over present classes of
    FN_c / m_c.
    """

    num_classes: int
    top1: float
    class_stats: ClassStats
    fp_rate: float
    fn_rate: float
    per_class: dict[int, float] = field(default_factory=dict)
    class_counts: dict[int, int] = field(default_factory=dict)
    delta_gap: Optional[float] = None
    false_positives: int = 0
    false_negatives: int = 0
    confusion_matrix: Optional[NDArray[np.int64]] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.top1 <= 1.0:
            raise ValueError(f"top1 must lie in [0, 1], got {self.top1}")
        if self.per_class:
            total = sum(self.class_counts[c] for c in self.per_class)
            weighted = sum(self.per_class[c] * self.class_counts[c] for c in self.per_class)
            if not math.isclose(weighted / total, self.top1, rel_tol=0.0, abs_tol=1e-12):
                raise ValueError(
                    f"top1 {self.top1} is not the count-weighted mean of per-class accuracy"
                )

    def summary(self) -> dict[str, Optional[float]]:
        """The CSV summary fields, in :data:`SUMMARY_FIELDS` order."""
        return {
            "top1": self.top1,
            "delta_gap": self.delta_gap,
            "class_best": self.class_stats.best,
            "class_worst": self.class_stats.worst,
            "class_mean": self.class_stats.mean,
            "class_std": self.class_stats.std,
            "fp_rate": self.fp_rate,
            "fn_rate": self.fn_rate,
        }

    def to_json(self) -> str:
        """One-line JSON document."""
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def to_dict(self) -> dict[str, object]:
        return {
            "num_classes": self.num_classes,
            "top1": self.top1,
            "delta_gap": self.delta_gap,
            "class_stats": {
                "best": self.class_stats.best,
                "worst": self.class_stats.worst,
                "mean": self.class_stats.mean,
                "std": self.class_stats.std,
            },
            "fp_rate": self.fp_rate,
            "fn_rate": self.fn_rate,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "per_class": {str(c): acc for c, acc in sorted(self.per_class.items())},
            "class_counts": {str(c): n for c, n in sorted(self.class_counts.items())},
            "confusion_matrix": (
                None if self.confusion_matrix is None else self.confusion_matrix.tolist()
            ),
        }


@dataclass(frozen=True)
class ComparisonReport:
    """Field-by-field deltas ``b − a`` between two reports on the same classes."""

    num_classes: int
    top1: float
    delta_gap: Optional[float]
    best: float
    worst: float
    mean: float
    std: float
    fp_rate: float
    fn_rate: float
    per_class: dict[int, float] = field(default_factory=dict)

    @property
    def gap_shrinkage(self) -> Optional[float]:
        """How much Δ fell from a to b (positive when b overfits less)."""
        return None if self.delta_gap is None else -self.delta_gap

    def to_dict(self) -> dict[str, object]:
        return {
            "num_classes": self.num_classes,
            "top1": self.top1,
            "delta_gap": self.delta_gap,
            "class_best": self.best,
            "class_worst": self.worst,
            "class_mean": self.mean,
            "class_std": self.std,
            "fp_rate": self.fp_rate,
            "fn_rate": self.fn_rate,
            "per_class": {str(c): d for c, d in sorted(self.per_class.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    runs: int


def accuracy(params: NetworkParams, dataset: Dataset) -> float:
    """Fraction of ``dataset`` the single-branch prediction gets right."""
    predictions = np.atleast_1d(predict(params, dataset.features))
    return float(np.mean(predictions == dataset.labels))


def confusion_matrix(
    labels: NDArray[np.int64], predictions: NDArray[np.int64], num_classes: int
) -> NDArray[np.int64]:
    """Counts with true class on rows and predicted class on columns."""
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (labels, predictions), 1)
    return matrix


def report_from_predictions(
    labels: NDArray[np.int64],
    predictions: NDArray[np.int64],
    num_classes: int,
    train_top1: Optional[float] = None,
) -> MetricsReport:
    """Build a report from true labels and predicted labels."""
    matrix = confusion_matrix(labels, predictions, num_classes)
    m = int(matrix.sum())
    if m == 0:
        raise ValueError("cannot report on an empty dataset")
    counts = matrix.sum(axis=1)
    hits = np.diag(matrix)
    false_pos = matrix.sum(axis=0) - hits
    false_neg = counts - hits
    present = np.flatnonzero(counts)

    per_class = {int(c): float(hits[c] / counts[c]) for c in present}
    negatives = m - counts
    fp_rates = np.divide(
        false_pos, negatives, out=np.zeros(num_classes), where=negatives > 0
    )
    top1 = float(hits.sum() / m)
    return MetricsReport(
        num_classes=num_classes,
        top1=top1,
        class_stats=ClassStats.of(list(per_class.values())),
        fp_rate=float(fp_rates.mean()),
        fn_rate=float(np.mean(false_neg[present] / counts[present])),
        per_class=per_class,
        class_counts={int(c): int(counts[c]) for c in present},
        delta_gap=None if train_top1 is None else 100.0 * (train_top1 - top1),
        false_positives=int(false_pos.sum()),
        false_negatives=int(false_neg.sum()),
        confusion_matrix=matrix,
    )


def evaluate(
    params: NetworkParams, dataset: Dataset, train_dataset: Optional[Dataset] = None
) -> MetricsReport:
    """
    Score ``params`` on ``dataset``.

    Args:
        params: Network to evaluate, one branch.
        dataset: Evaluation set.
        train_dataset: When given, its accuracy fills ``delta_gap``.

    Raises:
        ValueError: On feature-dimension or class-count mismatch.
    """
    for ds in (dataset, train_dataset):
        if ds is not None and ds.num_classes != params.num_classes:
            raise ValueError(
                f"network emits {params.num_classes} classes, dataset has {ds.num_classes}"
            )
    predictions = np.atleast_1d(predict(params, dataset.features))
    train_top1 = None if train_dataset is None else accuracy(params, train_dataset)
    return report_from_predictions(dataset.labels, predictions, dataset.num_classes, train_top1)


def compare(a: MetricsReport, b: MetricsReport) -> ComparisonReport:
    """Deltas ``b − a``.

    Raises:
        ValueError: If the reports cover different class counts.
    """
    if a.num_classes != b.num_classes:
        raise ValueError(f"cannot compare reports over {a.num_classes} and {b.num_classes} classes")
    gap = None
    if a.delta_gap is not None and b.delta_gap is not None:
        gap = b.delta_gap - a.delta_gap
    shared = sorted(set(a.per_class) & set(b.per_class))
    return ComparisonReport(
        num_classes=a.num_classes,
        top1=b.top1 - a.top1,
        delta_gap=gap,
        best=b.class_stats.best - a.class_stats.best,
        worst=b.class_stats.worst - a.class_stats.worst,
        mean=b.class_stats.mean - a.class_stats.mean,
        std=b.class_stats.std - a.class_stats.std,
        fp_rate=b.fp_rate - a.fp_rate,
        fn_rate=b.fn_rate - a.fn_rate,
        per_class={c: b.per_class[c] - a.per_class[c] for c in shared},
    )


def aggregate(reports: Sequence[MetricsReport]) -> dict[str, SummaryStats]:
    """Mean and population std of every summary field across runs.

    Fields that are ``None`` in some report (``delta_gap`` without a train
    set) are summarized over the reports that have them, and left out when
    none do.
    """
    if not reports:
        raise ValueError("nothing to aggregate")
    out = {}
    for name in SUMMARY_FIELDS:
        values = [r.summary()[name] for r in reports]
        present = np.array([v for v in values if v is not None], dtype=np.float64)
        if present.size:
            out[name] = SummaryStats(float(present.mean()), float(present.std()), present.size)
    return out
