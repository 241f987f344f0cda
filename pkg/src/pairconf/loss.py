"""
The Pairwise Confusion pair loss and its gradient.

For a pair (p1, y1), (p2, y2) of branch outputs and labels:

    L_pair = CE(p1, y1) + CE(p2, y2) + λ·γ(y1, y2)·D(p1, p2)

where γ is 1 when the labels differ and D is the Euclidean Confusion
‖p1 − p2‖². The Jeffreys divergence is available as D only to reproduce its
divergence under confident predictions.

Gradients are taken with respect to the probability vectors; the tensor module
chains them through softmax. Every function accepts a single pair or a batch of
pairs stacked along the leading axis.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from pairconf.simplex import ProbLike, as_probs
from pairconf.tensor import PROB_FLOOR, cross_entropy

logger = logging.getLogger(__name__)

JEFFREYS_FLOOR = 1e-12

Array = NDArray[np.float64]
Value = Union[float, Array]


class ConfusionMetric(str, Enum):
    EUCLIDEAN = "ec"
    JEFFREYS = "jeffreys"

    @classmethod
    def parse(cls, text: Union[str, "ConfusionMetric"]) -> "ConfusionMetric":
        if isinstance(text, ConfusionMetric):
            return text
        aliases = {
            "ec": cls.EUCLIDEAN,
            "euclidean_confusion": cls.EUCLIDEAN,
            "jeffreys": cls.JEFFREYS,
        }
        try:
            return aliases[text.strip().lower()]
        except KeyError:
            raise ValueError(
                f"unknown confusion metric {text!r}; expected 'ec' or 'jeffreys'"
            ) from None


@dataclass(frozen=True)
class PairLossConfig:
    """λ and the confusion metric; λ is the per-pair weight."""

    lam: float = 0.0
    metric: ConfusionMetric = ConfusionMetric.EUCLIDEAN

    def __post_init__(self) -> None:
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be a finite non-negative number, got {self.lam!r}")
        object.__setattr__(self, "metric", ConfusionMetric.parse(self.metric))


@dataclass(frozen=True)
class PairLossParts:
    """Unweighted components of a pair loss, kept apart for reporting."""

    ce1: Value
    ce2: Value
    confusion: Value


def gamma(label1: ArrayLike, label2: ArrayLike) -> Union[int, NDArray[np.int64]]:
    """1 where the labels differ, 0 where they agree."""
    differs = np.not_equal(label1, label2)
    if np.ndim(differs) == 0:
        return int(differs)
    return differs.astype(np.int64)


def _scalar(value: Array) -> Value:
    return float(value) if np.ndim(value) == 0 else value


def _probs_pair(p1: ProbLike, p2: ProbLike) -> tuple[Array, Array]:
    a, b = as_probs(p1), as_probs(p2)
    if a.shape != b.shape:
        raise ValueError(f"branch outputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def confusion(
    p1: ProbLike, p2: ProbLike, metric: ConfusionMetric = ConfusionMetric.EUCLIDEAN
) -> Value:
    """Unweighted confusion D(p1, p2) under ``metric``.

    The Jeffreys form clamps probabilities at 1e-12 before taking logs.
    """
    a, b = _probs_pair(p1, p2)
    if ConfusionMetric.parse(metric) is ConfusionMetric.EUCLIDEAN:
        return _scalar(np.square(a - b).sum(axis=-1))
    ac, bc = np.maximum(a, JEFFREYS_FLOOR), np.maximum(b, JEFFREYS_FLOOR)
    return _scalar(((ac - bc) * (np.log(ac) - np.log(bc))).sum(axis=-1))


def confusion_grad(
    p1: ProbLike, p2: ProbLike, metric: ConfusionMetric = ConfusionMetric.EUCLIDEAN
) -> tuple[Array, Array]:
    """(∂D/∂p1, ∂D/∂p2) of the unweighted confusion."""
    a, b = _probs_pair(p1, p2)
    if ConfusionMetric.parse(metric) is ConfusionMetric.EUCLIDEAN:
        diff = 2.0 * (a - b)
        return diff, -diff
    ac, bc = np.maximum(a, JEFFREYS_FLOOR), np.maximum(b, JEFFREYS_FLOOR)
    log_ratio = np.log(ac) - np.log(bc)
    # the clamp is flat below the floor
    g1 = np.where(a > JEFFREYS_FLOOR, log_ratio + 1.0 - bc / ac, 0.0)
    g2 = np.where(b > JEFFREYS_FLOOR, -log_ratio + 1.0 - ac / bc, 0.0)
    return g1, g2


def cross_entropy_grad(p: ProbLike, label: ArrayLike) -> Array:
    """∂(−log p[label])/∂p: −1/p[label] at the label, zero elsewhere (same floor as CE)."""
    probs = as_probs(p)
    y = np.asarray(label)
    if y.shape != probs.shape[:-1]:
        raise ValueError(f"labels of shape {y.shape} do not match probs of shape {probs.shape}")
    if np.any(y < 0) or np.any(y >= probs.shape[-1]):
        raise ValueError(f"label out of range [0, {probs.shape[-1]})")
    grad = np.zeros_like(probs)
    picked = np.take_along_axis(probs, y[..., None], axis=-1)
    np.put_along_axis(grad, y[..., None], -1.0 / np.maximum(picked, PROB_FLOOR), axis=-1)
    return grad


def pair_loss(
    p1: ProbLike,
    y1: ArrayLike,
    p2: ProbLike,
    y2: ArrayLike,
    cfg: PairLossConfig,
) -> tuple[Value, PairLossParts]:
    """
    Pair loss and its unweighted parts.

    Args:
        p1, p2: Branch outputs (one vector each, or aligned ``(B, N)`` batches).
        y1, y2: Labels of the two branches.
        cfg: λ and metric.

    Returns:
        (total, parts) with total = ce1 + ce2 + λ·γ·confusion.

    Raises:
        ValueError: On mismatched dimensions or out-of-range labels.
    """
    a, b = _probs_pair(p1, p2)
    ce1 = cross_entropy(a, y1)
    ce2 = cross_entropy(b, y2)
    conf = confusion(a, b, cfg.metric)
    total = ce1 + ce2 + cfg.lam * gamma(y1, y2) * conf
    return _scalar(np.asarray(total)), PairLossParts(ce1, ce2, conf)


def pair_loss_grad(
    p1: ProbLike,
    y1: ArrayLike,
    p2: ProbLike,
    y2: ArrayLike,
    cfg: PairLossConfig,
) -> tuple[Array, Array]:
    """(∂L_pair/∂p1, ∂L_pair/∂p2).

    For the Euclidean metric the confusion contribution is ±2·λ·γ·(p1 − p2).
    With λ = 0 the result is exactly the pair of cross-entropy gradients.
    """
    a, b = _probs_pair(p1, p2)
    g1 = cross_entropy_grad(a, y1)
    g2 = cross_entropy_grad(b, y2)
    if cfg.lam > 0.0:
        c1, c2 = confusion_grad(a, b, cfg.metric)
        weight = cfg.lam * np.asarray(gamma(y1, y2), dtype=np.float64)[..., None]
        g1 = g1 + weight * c1
        g2 = g2 + weight * c2
    return g1, g2
