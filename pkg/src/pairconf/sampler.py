"""
Pair sampling for Pairwise Confusion training.

Each epoch the training set is shuffled twice into two independent streams.
Walking both streams in aligned mini-batches, the k-th element of batch i in
stream A is paired with the k-th element of batch i in stream B, and the pair
carries γ = 1 when the two labels differ. The trailing ``size mod batch_size``
positions of both streams are dropped for the epoch so every batch is full.

Pairs are never chosen by label, so each stream's marginal is the dataset's own
label distribution, and the same index may be paired with itself (γ = 0).
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from pairconf.datasets import Dataset, LabeledSample
from pairconf.loss import gamma

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]


def _is_permutation(perm: NDArray[np.int64], size: int) -> bool:
    return perm.shape == (size,) and np.array_equal(np.sort(perm), np.arange(size))


@dataclass(frozen=True, eq=False)
class EpochPlan:
    """Two seeded permutations of the dataset indices and the batch size."""

    seed: SeedLike
    batch_size: int
    permutation_a: NDArray[np.int64]
    permutation_b: NDArray[np.int64]

    def __post_init__(self) -> None:
        size = int(np.shape(self.permutation_a)[0])
        streams = (self.permutation_a, self.permutation_b)
        if not all(_is_permutation(perm, size) for perm in streams):
            raise ValueError("epoch plan streams must both be permutations of range(dataset_size)")
        if not 1 <= self.batch_size <= size:
            raise ValueError(f"batch_size must lie in [1, {size}], got {self.batch_size}")

    @property
    def dataset_size(self) -> int:
        return int(self.permutation_a.shape[0])

    @property
    def num_batches(self) -> int:
        return self.dataset_size // self.batch_size

    @property
    def dropped(self) -> int:
        return self.dataset_size % self.batch_size


@dataclass(frozen=True, eq=False)
class PairBatch:
    """One aligned mini-batch of pairs.

    Row k holds stream-A sample ``indices_a[k]``, stream-B sample
    ``indices_b[k]`` and their γ.
    """

    indices_a: NDArray[np.int64]
    indices_b: NDArray[np.int64]
    features_a: NDArray[np.float64]
    features_b: NDArray[np.float64]
    labels_a: NDArray[np.int64]
    labels_b: NDArray[np.int64]
    gammas: NDArray[np.int64]

    def __post_init__(self) -> None:
        if self.indices_a.shape[0] == 0:
            raise ValueError("a pair batch cannot be empty")
        if not np.array_equal(self.gammas, gamma(self.labels_a, self.labels_b)):
            raise ValueError("gamma must be 1 exactly where the paired labels differ")

    def __len__(self) -> int:
        return int(self.indices_a.shape[0])

    @property
    def pairs(self) -> Iterator[tuple[LabeledSample, LabeledSample, int]]:
        for k in range(len(self)):
            yield (
                LabeledSample(self.features_a[k], int(self.labels_a[k])),
                LabeledSample(self.features_b[k], int(self.labels_b[k])),
                int(self.gammas[k]),
            )


def plan_epoch(dataset_size: int, batch_size: int, seed: SeedLike) -> EpochPlan:
    """Shuffle ``range(dataset_size)`` twice with one seeded generator.

    Raises:
        ValueError: If ``batch_size`` is 0 or exceeds ``dataset_size``.
    """
    if dataset_size < 1:
        raise ValueError(f"dataset_size must be positive, got {dataset_size}")
    if not 1 <= batch_size <= dataset_size:
        raise ValueError(f"batch_size must lie in [1, {dataset_size}], got {batch_size}")
    rng = np.random.default_rng(seed)
    perm_a = rng.permutation(dataset_size)
    perm_b = rng.permutation(dataset_size)
    return EpochPlan(seed, batch_size, perm_a, perm_b)


def next_pair_batch(plan: EpochPlan, dataset: Dataset, batch_index: int) -> PairBatch:
    """Pairs of batch ``batch_index``.

    Raises:
        ValueError: If ``batch_index`` is outside ``[0, plan.num_batches)`` or the
            dataset size disagrees with the plan.
    """
    if len(dataset) != plan.dataset_size:
        raise ValueError(f"plan covers {plan.dataset_size} samples, dataset has {len(dataset)}")
    if not 0 <= batch_index < plan.num_batches:
        raise ValueError(f"batch_index {batch_index} outside [0, {plan.num_batches})")
    window = slice(batch_index * plan.batch_size, (batch_index + 1) * plan.batch_size)
    idx_a = plan.permutation_a[window]
    idx_b = plan.permutation_b[window]
    labels_a = dataset.labels[idx_a]
    labels_b = dataset.labels[idx_b]
    return PairBatch(
        idx_a,
        idx_b,
        dataset.features[idx_a],
        dataset.features[idx_b],
        labels_a,
        labels_b,
        gamma(labels_a, labels_b),
    )


def iter_pair_batches(plan: EpochPlan, dataset: Dataset) -> Iterator[PairBatch]:
    for batch_index in range(plan.num_batches):
        yield next_pair_batch(plan, dataset, batch_index)


def expected_gamma_rate(labels: ArrayLike) -> float:
    """Probability that two independent uniform draws have different labels: 1 − Σ (m_i/m)²."""
    counts = np.unique(np.asarray(labels), return_counts=True)[1]
    shares = counts / counts.sum()
    return float(1.0 - np.square(shares).sum())


def derive_seed(root: int, *keys: int) -> int:
    """Deterministic 32-bit child seed of ``root`` for the consumer named by ``keys``."""
    sequence = np.random.SeedSequence(entropy=root, spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1)[0])
