"""
Probability vectors on the finite simplex and pointwise divergences between them.

Every divergence here accepts either :class:`ProbVector` instances or raw arrays
whose last axis is a probability vector. Arrays are validated the same way a
ProbVector is, and leading axes are treated as a batch:

- shape ``(N,)`` inputs return a Python ``float``
- shape ``(..., N)`` inputs return an array of shape ``(...)``

The batch form is what the certification suite uses to check hundreds of
thousands of pairs at once.
"""

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import rel_entr

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-9
IDENTITY_TOLERANCE = 1e-12

# Divergence values are plain floats (or float arrays in batch form).
DivergenceValue = float


@dataclass(frozen=True, eq=False)
class ProbVector:
    """A point on the N-simplex, e.g. one softmax output p(y|x).

    The backing array is float64 and read-only.
    """

    probs: NDArray[np.float64]

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64)
        check_simplex(probs)
        if probs.ndim != 1:
            raise ValueError(f"ProbVector must be one-dimensional, got shape {probs.shape}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return int(self.probs.shape[0])

    def __len__(self) -> int:
        return self.dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbVector):
            return NotImplemented
        return bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())


ProbLike = Union[ProbVector, ArrayLike]


def check_simplex(arr: NDArray[np.float64]) -> None:
    """Validate that the last axis of ``arr`` holds probability vectors."""
    if arr.ndim == 0:
        raise ValueError("probability vector must have at least one axis")
    if arr.shape[-1] < 2:
        raise ValueError(f"probability vectors need N >= 2 entries, got {arr.shape[-1]}")
    if np.isnan(arr).any():
        raise ValueError("probability vector contains NaN")
    if (arr < 0).any():
        raise ValueError("probability vector has negative entries")
    sums = arr.sum(axis=-1)
    if not np.all(np.abs(sums - 1.0) <= SIMPLEX_TOLERANCE):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"probability vector does not sum to 1 (off by {worst:.3e})")


def as_probs(p: ProbLike) -> NDArray[np.float64]:
    """Return the float64 array behind ``p``, validating raw arrays."""
    if isinstance(p, ProbVector):
        return p.probs
    arr = np.asarray(p, dtype=np.float64)
    check_simplex(arr)
    return arr


def _pair(p: ProbLike, q: ProbLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    a, b = as_probs(p), as_probs(q)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return a, b


def _out(value: NDArray[np.float64]) -> Union[float, NDArray[np.float64]]:
    return float(value) if np.ndim(value) == 0 else value


def kl_divergence(p: ProbLike, q: ProbLike) -> DivergenceValue:
    """Kullback-Leibler divergence KL(p || q) in nats.

    Uses 0·log(0/q) = 0. Returns ``math.inf`` when some p(u) > 0 has q(u) = 0.

    Raises:
        ValueError: On dimension mismatch, NaN, or non-simplex input.
    """
    a, b = _pair(p, q)
    return _out(rel_entr(a, b).sum(axis=-1))


def jeffreys_divergence(p: ProbLike, q: ProbLike) -> DivergenceValue:
    """Jeffreys divergence KL(p || q) + KL(q || p); symmetric in its arguments."""
    a, b = _pair(p, q)
    return _out(rel_entr(a, b).sum(axis=-1) + rel_entr(b, a).sum(axis=-1))


def total_variation(p: ProbLike, q: ProbLike) -> DivergenceValue:
    """Total variation distance ½·Σ|p(u) − q(u)|, in [0, 1]."""
    a, b = _pair(p, q)
    return _out(0.5 * np.abs(a - b).sum(axis=-1))


def euclidean_confusion(p: ProbLike, q: ProbLike) -> DivergenceValue:
    """Euclidean Confusion ‖p − q‖₂², in [0, 2]."""
    a, b = _pair(p, q)
    return _out(np.square(a - b).sum(axis=-1))


def jeffreys_pathology_bound(delta1: float, delta2: float) -> float:
    """
    Closed-form lower bound on the Jeffreys divergence of a confident 2-class pair.

    For p = (1 − δ1, δ1) and q = (δ2, 1 − δ2), i.e. two inputs classified
    correctly into different classes with residual mass δ1 and δ2:

        D_J(p, q) ≥ (1 − δ1 − δ2)·(2·log(1 − δ1 − δ2) − log(δ1·δ2))

    The bound grows without limit as (δ1, δ2) → (0⁺, 0⁺), which is why the
    Jeffreys divergence cannot serve as a confusion regularizer.

    Args:
        delta1: Residual probability of the first sample, in (0, ½).
        delta2: Residual probability of the second sample, in (0, ½).

    Returns:
        The bound, in nats.

    Raises:
        ValueError: If either delta lies outside (0, ½).
    """
    for name, delta in (("delta1", delta1), ("delta2", delta2)):
        if not 0.0 < delta < 0.5:
            raise ValueError(f"{name} must lie in (0, 1/2), got {delta!r}")
    margin = 1.0 - delta1 - delta2
    return margin * (2.0 * math.log(margin) - math.log(delta1 * delta2))


def confident_pair(delta1: float, delta2: float) -> tuple[ProbVector, ProbVector]:
    """The 2-class pair whose Jeffreys divergence ``jeffreys_pathology_bound`` bounds."""
    return ProbVector([1.0 - delta1, delta1]), ProbVector([delta2, 1.0 - delta2])


def sample_simplex(rng: np.random.Generator, count: int, dim: int) -> NDArray[np.float64]:
    """Draw ``count`` uniform (flat Dirichlet) points on the ``dim``-simplex.

    Exponential variates normalized to sum one; every entry is strictly positive
    with probability one.
    """
    if dim < 2:
        raise ValueError(f"simplex dimension must be >= 2, got {dim}")
    draws = rng.standard_exponential(size=(count, dim))
    return draws / draws.sum(axis=-1, keepdims=True)


def is_identical(p: ProbLike, q: ProbLike, tol: float = IDENTITY_TOLERANCE) -> bool:
    """Entrywise equality within ``tol``."""
    a, b = _pair(p, q)
    return bool(np.all(np.abs(a - b) <= tol))
