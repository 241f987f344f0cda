"""
Set-level Euclidean Confusion and Energy Distance between finite sets of
probability vectors.

These are brute-force O(|a|·|b|·N) evaluations. They serve as the oracle the
training-time sampled estimate is checked against, so no approximation is
attempted. Within-set expectations include self-pairs: X and X' are independent
uniform draws from the same set and may coincide.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from pairconf.simplex import ProbLike, as_probs, check_simplex

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DistributionSet:
    """The predicted distributions of every sample of one class.

    ``members`` is an ``(m, N)`` read-only array, one ProbVector per row.
    """

    members: NDArray[np.float64]
    class_id: int = 0

    def __post_init__(self) -> None:
        members = np.array(self.members, dtype=np.float64)
        if members.ndim != 2 or members.shape[0] == 0:
            raise ValueError(f"DistributionSet needs a non-empty (m, N) array, got {members.shape}")
        check_simplex(members)
        members.setflags(write=False)
        object.__setattr__(self, "members", members)

    @classmethod
    def from_vectors(cls, vectors: Iterable[ProbLike], class_id: int = 0) -> "DistributionSet":
        rows = [as_probs(v) for v in vectors]
        if not rows:
            raise ValueError("DistributionSet cannot be empty")
        dims = {row.shape[-1] for row in rows}
        if len(dims) != 1:
            raise ValueError(f"DistributionSet members disagree on dimension: {sorted(dims)}")
        return cls(np.stack(rows), class_id)

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    @property
    def dim(self) -> int:
        return int(self.members.shape[1])


def _check_dims(a: DistributionSet, b: DistributionSet) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch between sets: {a.dim} vs {b.dim}")


def set_euclidean_confusion(a: DistributionSet, b: DistributionSet) -> float:
    """Mean Euclidean Confusion over all |a|·|b| cross pairs."""
    _check_dims(a, b)
    return float(cdist(a.members, b.members, "sqeuclidean").mean())


def energy_distance_sq(a: DistributionSet, b: DistributionSet) -> float:
    """
    Squared Energy Distance under the squared Euclidean norm.

    2·EC(a, b) − EC(a, a) − EC(b, b). Algebraically this equals
    2·‖mean(a) − mean(b)‖², so it is non-negative; rounding residue below zero
    is clamped.
    """
    _check_dims(a, b)
    value = (
        2.0 * set_euclidean_confusion(a, b)
        - set_euclidean_confusion(a, a)
        - set_euclidean_confusion(b, b)
    )
    if value < 0.0:
        logger.debug(f"Clamping energy distance rounding residue {value!r} to 0")
        value = 0.0
    return value


def energy_distance(a: DistributionSet, b: DistributionSet) -> float:
    """Energy Distance with unsquared Euclidean norms.

    Returns D_EN = sqrt(2·E‖X − Y‖ − E‖X − X'‖ − E‖Y − Y'‖). Provided for
    reference only; the certified inequalities use :func:`energy_distance_sq`.
    """
    _check_dims(a, b)
    cross = cdist(a.members, b.members, "euclidean").mean()
    within_a = cdist(a.members, a.members, "euclidean").mean()
    within_b = cdist(b.members, b.members, "euclidean").mean()
    return math.sqrt(max(0.0, float(2.0 * cross - within_a - within_b)))


def sampled_set_confusion(
    a: DistributionSet,
    b: DistributionSet,
    num_pairs: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte-Carlo estimate of :func:`set_euclidean_confusion`.

    Draws ``num_pairs`` independent uniform (x, y) pairs.

    Returns:
        (mean, standard error) of the sampled pair confusions.
    """
    _check_dims(a, b)
    if num_pairs < 2:
        raise ValueError(f"num_pairs must be >= 2, got {num_pairs}")
    xs = a.members[rng.integers(0, a.size, size=num_pairs)]
    ys = b.members[rng.integers(0, b.size, size=num_pairs)]
    values = np.square(xs - ys).sum(axis=-1)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(num_pairs))


def class_pair_confusion_oracle(sets: Sequence[DistributionSet]) -> float:
    """
    Expected confusion of a uniformly drawn pair, given that its labels differ.

    Each ordered class pair (i, j), i ≠ j, is weighted by m_i·m_j, which is
    the probability two independent uniform draws from the pooled data land in
    classes i and j.
    """
    if len(sets) < 2:
        raise ValueError("need at least two classes for a cross-class oracle")
    weighted = 0.0
    total_weight = 0.0
    for i, si in enumerate(sets):
        for j, sj in enumerate(sets):
            if i == j:
                continue
            weight = float(si.size * sj.size)
            weighted += weight * set_euclidean_confusion(si, sj)
            total_weight += weight
    return weighted / total_weight
