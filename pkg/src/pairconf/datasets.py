"""
Synthetic fine-grained datasets and CSV ingestion.

The generator builds a two-level Gaussian mixture: cluster centers far apart,
a few subclass centers per cluster close together, and samples scattered
around each subclass center. σ_b and σ_s set the typical norm of a cluster
center and of a subclass offset whatever the dimension, while
σ_w is the per-coordinate noise, so with σ_s = σ_w neighboring subclasses
overlap. Every subclass is a class: classes sharing a cluster are hard to
tell apart while classes from different clusters are easy, the defining
property of fine-grained data.

Experiments standardize features with the training split's statistics
(:func:`standardize`) before training.

CSV format: comma-separated, decimal-point floats, final column an integer
label, optional single header line, UTF-8, LF or CRLF line endings.
"""

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Union

import numpy as np
from numpy.typing import NDArray

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Malformed dataset input; ``line`` is the 1-based CSV line when known."""

    def __init__(self, message: str, line: Union[int, None] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class LabeledSample:
    features: NDArray[np.float64]
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix ``(m, d)``, integer labels ``(m,)`` and the class count N."""

    features: NDArray[np.float64]
    labels: NDArray[np.int64]
    num_classes: int

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] == 0:
            raise DatasetError(f"features must be a non-empty (m, d) matrix, got {features.shape}")
        if labels.shape != (features.shape[0],):
            raise DatasetError(f"labels {labels.shape} do not match features {features.shape}")
        if not np.all(np.isfinite(features)):
            raise DatasetError("features contain non-finite values")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __getitem__(self, index: int) -> LabeledSample:
        return LabeledSample(self.features[index], int(self.labels[index]))

    def __iter__(self) -> Iterator[LabeledSample]:
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def class_counts(self) -> NDArray[np.int64]:
        return np.bincount(self.labels, minlength=self.num_classes)

    def class_indices(self, label: int) -> NDArray[np.int64]:
        return np.flatnonzero(self.labels == label)

    def class_centroids(self) -> NDArray[np.float64]:
        """Mean feature vector per class (NaN rows for absent classes)."""
        centroids = np.full((self.num_classes, self.dim), np.nan)
        for label in np.unique(self.labels):
            centroids[label] = self.features[self.labels == label].mean(axis=0)
        return centroids


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the two-level Gaussian mixture. N = num_clusters·subclasses_per_cluster."""

    num_clusters: int = 5
    subclasses_per_cluster: int = 4
    dim: int = 16
    samples_per_class: int = 30
    cluster_separation: float = 10.0
    subclass_separation: float = 1.0
    noise: float = 1.0
    train_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("num_clusters", "subclasses_per_cluster", "dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.samples_per_class < 2:
            raise ValueError(
                f"samples_per_class must be >= 2 to split train/eval, got {self.samples_per_class}"
            )
        for name in ("cluster_separation", "subclass_separation", "noise"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.subclass_separation < self.cluster_separation:
            raise ValueError(
                "subclass_separation must be smaller than cluster_separation "
                f"({self.subclass_separation} >= {self.cluster_separation})"
            )
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")

    @property
    def num_classes(self) -> int:
        return self.num_clusters * self.subclasses_per_cluster

    def cluster_of(self, label: int) -> int:
        return label // self.subclasses_per_cluster

    @property
    def train_per_class(self) -> int:
        n = self.samples_per_class
        return min(max(int(round(n * self.train_fraction)), 1), n - 1)


def separable_spec(spec: SynthSpec) -> SynthSpec:
    """Same class count and sizes, but one class per cluster: low inter-class similarity."""
    return replace(spec, num_clusters=spec.num_classes, subclasses_per_cluster=1)


SYNTH_PRESETS = {
    "confusable": lambda spec: spec,
    "separable": separable_spec,
}


def generate(spec: SynthSpec) -> tuple[Dataset, Dataset]:
    """
    Draw a stratified train/eval pair from the mixture described by ``spec``.

    Class ``c·k + j`` is subclass j of cluster c. Both splits hold the same
    number of samples of every class, and no sample appears in both.
    Deterministic given ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.subclasses_per_cluster
    # per-coordinate scale σ/√d keeps center norms near σ
    root_d = np.sqrt(spec.dim)
    clusters = rng.normal(
        0.0, spec.cluster_separation / root_d, size=(spec.num_clusters, spec.dim)
    )
    offsets = rng.normal(
        0.0, spec.subclass_separation / root_d, size=(spec.num_classes, spec.dim)
    )
    centers = clusters[np.arange(spec.num_classes) // k] + offsets

    n, n_train = spec.samples_per_class, spec.train_per_class
    train_x, train_y, eval_x, eval_y = [], [], [], []
    for label, center in enumerate(centers):
        samples = center + rng.normal(0.0, spec.noise, size=(n, spec.dim))
        order = rng.permutation(n)
        train_x.append(samples[order[:n_train]])
        eval_x.append(samples[order[n_train:]])
        train_y.append(np.full(n_train, label))
        eval_y.append(np.full(n - n_train, label))

    train = Dataset(np.concatenate(train_x), np.concatenate(train_y), spec.num_classes)
    evaluation = Dataset(np.concatenate(eval_x), np.concatenate(eval_y), spec.num_classes)
    logger.debug(
        f"Generated {len(train)} train / {len(evaluation)} eval samples, "
        f"N={spec.num_classes}, d={spec.dim}, seed={spec.seed}"
    )
    return train, evaluation


def standardize(train: Dataset, evaluation: Dataset) -> tuple[Dataset, Dataset]:
    """
    Shift and scale every feature to zero mean and unit variance on ``train``.

    ``evaluation`` is transformed with the training statistics. Constant
    features are only centered.
    """
    if train.dim != evaluation.dim:
        raise DatasetError(f"train features have dimension {train.dim}, eval {evaluation.dim}")
    mean = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    scale[scale == 0.0] = 1.0
    return (
        Dataset((train.features - mean) / scale, train.labels, train.num_classes),
        Dataset((evaluation.features - mean) / scale, evaluation.labels, evaluation.num_classes),
    )


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _parse_row(row: list[str], line: int) -> tuple[list[float], int]:
    if len(row) < 2:
        raise DatasetError("need at least one feature and a label", line)
    try:
        features = [float(cell) for cell in row[:-1]]
    except ValueError as exc:
        raise DatasetError(f"bad feature value ({exc})", line) from None
    try:
        label = int(row[-1])
    except ValueError:
        raise DatasetError(f"label {row[-1]!r} is not an integer", line) from None
    if label < 0:
        raise DatasetError(f"label {label} is negative", line)
    return features, label


def load_csv(path: Union[str, Path], num_classes: Union[int, None] = None) -> Dataset:
    """
    Read a feature CSV.

    The first line is a header only when none of its cells parse as numbers.
    Blank lines are skipped.

    Args:
        path: CSV file.
        num_classes: Class count; defaults to ``max(label) + 1``.

    Raises:
        DatasetError: On an empty file, an unparsable or ragged row (naming its
            line), or labels outside ``[0, num_classes)``.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc

    features: list[list[float]] = []
    labels: list[int] = []
    width = None
    for line, row in enumerate(rows, start=1):
        cells = [cell.strip() for cell in row]
        if not cells or all(not cell for cell in cells):
            continue
        if line == 1 and not any(_is_number(cell) for cell in cells):
            logger.debug(f"Treating first line of {path} as a header")
            continue
        x, y = _parse_row(cells, line)
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DatasetError(f"ragged row with {len(cells)} columns, expected {width}", line)
        features.append(x)
        labels.append(y)

    if not features:
        raise DatasetError(f"{path} contains no samples")
    count = num_classes if num_classes is not None else max(labels) + 1
    return Dataset(np.array(features), np.array(labels), max(count, 2))


def save_csv(dataset: Dataset, path: Union[str, Path], header: bool = True) -> None:
    """Write ``dataset`` in the format :func:`load_csv` reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if header:
            writer.writerow([f"x{i}" for i in range(dataset.dim)] + ["label"])
        for sample in dataset:
            writer.writerow([repr(float(v)) for v in sample.features] + [sample.label])
