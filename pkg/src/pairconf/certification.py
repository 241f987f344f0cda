"""
Randomized certification of the divergence inequalities.

Pointwise, on random full-support simplex pairs::

    ‖p − q‖² ≤ 4·TV(p, q)² ≤ J(p, q)          and hence ‖p − q‖² ≤ J(p, q)

Set-level, on random pairs of distribution sets::

    ½·ED²(A, B) ≤ EC(A, B)
    EC(A, A) + EC(B, B) ≤ 2·EC(A, B)

and for the confident two-class pair, the closed-form Jeffreys bound never
exceeds the divergence it bounds.

A case violates an inequality ``lhs ≤ rhs`` when ``lhs − rhs > 1e-12·max(1, |rhs|)``.
Work is split into chunks whose generators are seeded from (seed, check,
dimension, chunk), so the report depends only on ``seed`` and ``trials``,
never on the worker count.
"""

import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from pairconf.pointset import DistributionSet, energy_distance_sq, set_euclidean_confusion
from pairconf.sampler import derive_seed
from pairconf.simplex import (
    euclidean_confusion,
    jeffreys_divergence,
    jeffreys_pathology_bound,
    sample_simplex,
    total_variation,
)

logger = logging.getLogger(__name__)

POINTWISE_DIMS = (2, 5, 50, 200)
SET_DIMS = (2, 5, 50)
MAX_SET_SIZE = 20
CHUNK_SIZE = 10_000
VIOLATION_SLACK = 1e-12
SMALLEST_DELTA = 1e-9

_POINTWISE, _SETS, _PATHOLOGY = 0, 1, 2

Array = NDArray[np.float64]


@dataclass
class CheckResult:
    """Tally of one inequality ``lhs ≤ rhs`` over its random cases."""

    name: str
    cases: int = 0
    violations: int = 0
    tightest_ratio: float = 0.0
    counterexample: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def absorb(self, lhs: Array, rhs: Array, describe: Callable[[int], str]) -> None:
        """Add a block of cases; ``describe(k)`` renders case k of the block."""
        lhs = np.asarray(lhs, dtype=np.float64)
        rhs = np.asarray(rhs, dtype=np.float64)
        bad = (lhs - rhs) > VIOLATION_SLACK * np.maximum(1.0, np.abs(rhs))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(rhs > 0, lhs / rhs, 0.0)
        finite = ratios[np.isfinite(ratios)]
        if finite.size:
            self.tightest_ratio = max(self.tightest_ratio, float(finite.max()))
        self.cases += int(lhs.size)
        self.violations += int(bad.sum())
        if self.counterexample is None and bad.any():
            k = int(np.flatnonzero(bad)[0])
            self.counterexample = f"{describe(k)} lhs={lhs[k]!r} rhs={rhs[k]!r}"

    def merge(self, other: "CheckResult") -> None:
        self.cases += other.cases
        self.violations += other.violations
        self.tightest_ratio = max(self.tightest_ratio, other.tightest_ratio)
        if self.counterexample is None:
            self.counterexample = other.counterexample


@dataclass
class CertificationReport:
    seed: int
    trials: int
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def violations(self) -> int:
        return sum(check.violations for check in self.checks)

    def lines(self) -> list[str]:
        """Human-readable summary; identical for identical (seed, trials)."""
        out = [f"certify seed={self.seed} trials={self.trials}"]
        width = max(len(check.name) for check in self.checks)
        for check in self.checks:
            status = "ok" if check.passed else "FAIL"
            out.append(
                f"{check.name:<{width}}  cases={check.cases:>7}  violations={check.violations}"
                f"  tightest={check.tightest_ratio:.17g}  {status}"
            )
            if check.counterexample is not None:
                out.append(f"  counterexample: {check.counterexample}")
        verdict = "all inequalities hold" if self.passed else f"{self.violations} violations"
        out.append(verdict)
        return out


def _pointwise_chunk(rng: np.random.Generator, dim: int, count: int) -> list[CheckResult]:
    p = sample_simplex(rng, count, dim)
    q = sample_simplex(rng, count, dim)
    ec = euclidean_confusion(p, q)
    tv2 = 4.0 * np.square(total_variation(p, q))
    jeff = jeffreys_divergence(p, q)

    def describe(k: int) -> str:
        return f"N={dim} p={p[k].tolist()!r} q={q[k].tolist()!r}"

    checks = [
        (f"ec <= 4tv^2        N={dim}", ec, tv2),
        (f"4tv^2 <= jeffreys  N={dim}", tv2, jeff),
        (f"ec <= jeffreys     N={dim}", ec, jeff),
    ]
    results = []
    for name, lhs, rhs in checks:
        result = CheckResult(name)
        result.absorb(lhs, rhs, describe)
        results.append(result)
    return results


def _set_chunk(rng: np.random.Generator, dim: int, count: int) -> list[CheckResult]:
    sets = []
    half_energy = np.empty(count)
    cross = np.empty(count)
    within = np.empty(count)
    for k in range(count):
        size_a, size_b = rng.integers(1, MAX_SET_SIZE + 1, size=2)
        a = DistributionSet(sample_simplex(rng, int(size_a), dim))
        b = DistributionSet(sample_simplex(rng, int(size_b), dim))
        sets.append((a, b))
        cross[k] = set_euclidean_confusion(a, b)
        within[k] = set_euclidean_confusion(a, a) + set_euclidean_confusion(b, b)
        half_energy[k] = 0.5 * energy_distance_sq(a, b)

    def describe(k: int) -> str:
        a, b = sets[k]
        return f"N={dim} a={a.members.tolist()!r} b={b.members.tolist()!r}"

    energy = CheckResult(f"ed^2/2 <= set ec   N={dim}")
    energy.absorb(half_energy, cross, describe)
    spread = CheckResult(f"within <= 2*cross  N={dim}")
    spread.absorb(within, 2.0 * cross, describe)
    return [energy, spread]


def _pathology_chunk(rng: np.random.Generator, count: int) -> list[CheckResult]:
    # log-uniform residues reach the confident regime where the bound blows up
    exponents = rng.uniform(math.log10(SMALLEST_DELTA), math.log10(0.5), size=(count, 2))
    deltas = np.minimum(10.0**exponents, np.nextafter(0.5, 0.0))
    bound = np.array([jeffreys_pathology_bound(d1, d2) for d1, d2 in deltas])
    p = np.stack([1.0 - deltas[:, 0], deltas[:, 0]], axis=-1)
    q = np.stack([deltas[:, 1], 1.0 - deltas[:, 1]], axis=-1)
    jeff = jeffreys_divergence(p, q)

    def describe(k: int) -> str:
        return f"delta1={deltas[k, 0]!r} delta2={deltas[k, 1]!r}"

    result = CheckResult("pathology bound <= jeffreys")
    result.absorb(bound, jeff, describe)
    return [result]


def _run_task(task: tuple[int, int, int, int, int]) -> list[CheckResult]:
    seed, family, dim, chunk, count = task
    rng = np.random.default_rng(derive_seed(seed, family, dim, chunk))
    if family == _POINTWISE:
        return _pointwise_chunk(rng, dim, count)
    if family == _SETS:
        return _set_chunk(rng, dim, count)
    return _pathology_chunk(rng, count)


def _chunks(seed: int, family: int, dim: int, total: int) -> list[tuple[int, int, int, int, int]]:
    return [
        (seed, family, dim, index, min(CHUNK_SIZE, total - start))
        for index, start in enumerate(range(0, total, CHUNK_SIZE))
    ]


def run_certification(seed: int, trials: int, workers: int = 1) -> CertificationReport:
    """
    Fuzz every inequality.

    Args:
        seed: Root seed.
        trials: Random pairs per dimension for the pointwise checks and the
            pathology bound; the set-level checks use ``max(1, trials // 10)``
            set pairs per dimension.
        workers: Worker processes; results are merged in task order.

    Raises:
        ValueError: If ``trials`` or ``workers`` is below 1.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    tasks = []
    for dim in POINTWISE_DIMS:
        tasks += _chunks(seed, _POINTWISE, dim, trials)
    for dim in SET_DIMS:
        tasks += _chunks(seed, _SETS, dim, max(1, trials // 10))
    tasks += _chunks(seed, _PATHOLOGY, 2, trials)
    logger.debug(f"Certification: {len(tasks)} chunks on {workers} worker(s)")

    if workers == 1:
        outcomes = [_run_task(task) for task in tasks]
    else:
        with Pool(workers) as pool:
            outcomes = pool.map(_run_task, tasks)

    merged: dict[str, CheckResult] = {}
    for results in outcomes:
        for result in results:
            if result.name in merged:
                merged[result.name].merge(result)
            else:
                merged[result.name] = result
    report = CertificationReport(seed, trials, list(merged.values()))
    if not report.passed:
        logger.warning(f"Certification found {report.violations} violations")
    return report
