"""
Desk-scale baseline-versus-Pairwise-Confusion experiments.

Trial i of an experiment draws its data from one derived seed and trains from
another; both arms (baseline with λ = 0, PC with the configured λ) reuse the
same two seeds, so the arms differ only in λ. Trials run in a process pool and
are merged in trial order.

Every run writes into its output directory:

- ``baseline.jsonl`` / ``pc.jsonl``: one report per trial
- ``summary.csv``: one row per (arm, trial)
- ``traces/<arm>_trial<NN>.csv``: per-epoch training traces
- ``comparison.json``: per-trial and mean deltas PC − baseline
- ``manifest.txt``: run id, effective configuration, outputs, duration
"""

import csv
import hashlib
import json
import logging
import subprocess
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from pairconf.config import ConfigError, ExperimentConfig
from pairconf.context_manager import config_context
from pairconf.datasets import Dataset, generate, load_csv, save_csv, standardize
from pairconf.loss import ConfusionMetric
from pairconf.metrics import (
    SUMMARY_FIELDS,
    ComparisonReport,
    MetricsReport,
    compare,
    evaluate,
)
from pairconf.pointset import DistributionSet, class_pair_confusion_oracle
from pairconf.sampler import derive_seed, iter_pair_batches, plan_epoch
from pairconf.simplex import euclidean_confusion
from pairconf.tensor import NetworkParams, predict_proba
from pairconf.trainer import NonFiniteLossError, TrainTrace, train

logger = logging.getLogger(__name__)

# child-seed keys under ExperimentConfig.seed
DATA_STREAM = 10
TRAIN_STREAM = 11
CONSISTENCY_STREAM = 12

PATHOLOGY_QUORUM = 0.8
CONSISTENCY_EPOCHS = 20
BASELINE, PC = "baseline", "pc"
_DELTA_FIELDS = ("top1", "delta_gap", "best", "worst", "mean", "std", "fp_rate", "fn_rate")

PathLike = Union[str, Path]


class PathologyStatus(str, Enum):
    ABORTED = "aborted"
    GROWING = "growing"
    BOUNDED = "bounded"


def pathology_status(trace: TrainTrace, aborted: bool = False) -> PathologyStatus:
    """
    Classify a run's confusion term.

    ``growing`` means the per-epoch mean confusion over the final half of
    training has a positive least-squares slope and ends above where that
    half started.
    """
    if aborted:
        return PathologyStatus.ABORTED
    tail = trace.column("mean_confusion")[len(trace) // 2 :]
    if tail.size < 2:
        return PathologyStatus.BOUNDED
    slope = np.polyfit(np.arange(tail.size, dtype=np.float64), tail, 1)[0]
    if slope > 0 and tail[-1] > tail[0]:
        return PathologyStatus.GROWING
    return PathologyStatus.BOUNDED


@dataclass(frozen=True)
class ConsistencyCheck:
    """Sampled γ = 1 pair confusion against the exhaustive class-pair oracle."""

    sampled: float
    oracle: float
    stderr: float
    pairs: int

    def within(self, sigmas: float = 3.0) -> bool:
        return abs(self.sampled - self.oracle) <= sigmas * self.stderr


def confusion_consistency(
    params: NetworkParams, dataset: Dataset, epochs: int, batch_size: int, seed: int
) -> ConsistencyCheck:
    """
    Pool the Euclidean Confusion of every γ = 1 pair the sampler emits over
    ``epochs`` epochs on a frozen model and compare the pooled mean with
    :func:`class_pair_confusion_oracle` over the model's per-class outputs.

    The standard error is the ratio-estimator error across epochs.
    """
    if epochs < 2:
        raise ValueError(f"need at least two epochs for a standard error, got {epochs}")
    probs = predict_proba(params, dataset.features)
    sets = [
        DistributionSet(probs[dataset.labels == label], int(label))
        for label in np.unique(dataset.labels)
    ]
    oracle = class_pair_confusion_oracle(sets)

    sums = np.zeros(epochs)
    counts = np.zeros(epochs)
    for epoch in range(epochs):
        plan = plan_epoch(len(dataset), batch_size, derive_seed(seed, epoch))
        for batch in iter_pair_batches(plan, dataset):
            mask = batch.gammas.astype(bool)
            if mask.any():
                pa, pb = probs[batch.indices_a[mask]], probs[batch.indices_b[mask]]
                values = euclidean_confusion(pa, pb)
                sums[epoch] += float(np.sum(values))
                counts[epoch] += int(mask.sum())
    total = counts.sum()
    if total == 0:
        raise ValueError("the sampler produced no pairs with differing labels")
    ratio = sums.sum() / total
    residuals = sums - ratio * counts
    stderr = float(np.sqrt(np.sum(residuals**2) * epochs / (epochs - 1)) / total)
    return ConsistencyCheck(float(ratio), oracle, stderr, int(total))


@dataclass
class TrialResult:
    arm: str
    trial: int
    lam: float
    data_seed: Optional[int]
    train_seed: int
    trace: TrainTrace
    status: PathologyStatus
    report: Optional[MetricsReport] = None
    abort_message: Optional[str] = None
    consistency: Optional[ConsistencyCheck] = None

    @property
    def aborted(self) -> bool:
        return self.status is PathologyStatus.ABORTED

    @property
    def train_accuracy(self) -> Optional[float]:
        return None if self.aborted else self.trace.final.train_accuracy

    def to_dict(self) -> dict[str, Any]:
        head = {
            "arm": self.arm,
            "trial": self.trial,
            "lambda": self.lam,
            "data_seed": self.data_seed,
            "train_seed": self.train_seed,
            "status": self.status.value,
        }
        if self.report is None:
            return {**head, "aborted": True, "message": self.abort_message}
        return {**head, "aborted": False, **self.report.to_dict()}

    def summary_row(self) -> dict[str, Any]:
        row = {
            "arm": self.arm,
            "trial": self.trial,
            "lambda": self.lam,
            "status": self.status.value,
            "train_accuracy": self.train_accuracy,
            "final_confusion": self.trace.final.mean_confusion if len(self.trace) else None,
        }
        summary = self.report.summary() if self.report is not None else {}
        row.update({name: summary.get(name) for name in SUMMARY_FIELDS})
        return row


SUMMARY_COLUMNS = (
    "arm",
    "trial",
    "lambda",
    "status",
    "train_accuracy",
    *SUMMARY_FIELDS,
    "final_confusion",
)


def load_trial_data(cfg: ExperimentConfig, trial: int) -> tuple[Dataset, Dataset, Optional[int]]:
    """
    (train, eval, data seed) for ``trial``, standardized when ``cfg.standardize``.

    CSV data is the same for every trial and has no data seed.
    """
    data_seed: Optional[int] = None
    if cfg.uses_csv:
        assert cfg.train_csv is not None and cfg.eval_csv is not None
        train_ds, eval_ds = load_csv(cfg.train_csv), load_csv(cfg.eval_csv)
        num_classes = max(train_ds.num_classes, eval_ds.num_classes)
        train_ds = Dataset(train_ds.features, train_ds.labels, num_classes)
        eval_ds = Dataset(eval_ds.features, eval_ds.labels, num_classes)
    else:
        data_seed = derive_seed(cfg.seed, DATA_STREAM, trial)
        train_ds, eval_ds = generate(replace(cfg.effective_synth(), seed=data_seed))
    if cfg.standardize:
        train_ds, eval_ds = standardize(train_ds, eval_ds)
    return train_ds, eval_ds, data_seed


def check_runnable(cfg: ExperimentConfig) -> int:
    """
    Number of classes of ``cfg``'s data, after checking the batch fits the training split.

    Raises:
        ConfigError: If ``batch_size`` exceeds the training samples.
        DatasetError: If CSV input is unreadable or malformed.
    """
    if not cfg.uses_csv:
        return cfg.effective_synth().num_classes
    train_ds = load_trial_data(cfg, 0)[0]
    if cfg.train.batch_size > len(train_ds):
        raise ConfigError(
            f"batch_size {cfg.train.batch_size} exceeds the {len(train_ds)} training samples"
        )
    return train_ds.num_classes


def run_trial(
    cfg: ExperimentConfig, arm: str, trial: int, check_consistency: bool = False
) -> TrialResult:
    """Train and evaluate one trial with ``cfg.train`` (λ included)."""
    train_ds, eval_ds, data_seed = load_trial_data(cfg, trial)
    train_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, TRAIN_STREAM, trial))
    common = dict(arm=arm, trial=trial, lam=train_cfg.lam, data_seed=data_seed)
    try:
        params, trace = train(train_ds, eval_ds, train_cfg)
    except NonFiniteLossError as exc:
        logger.warning(f"{arm} trial {trial} aborted: {exc}")
        return TrialResult(
            **common,
            train_seed=train_cfg.seed,
            trace=exc.trace,
            status=PathologyStatus.ABORTED,
            abort_message=str(exc),
        )

    consistency = None
    if check_consistency:
        consistency = confusion_consistency(
            params,
            train_ds,
            CONSISTENCY_EPOCHS,
            train_cfg.batch_size,
            derive_seed(cfg.seed, CONSISTENCY_STREAM, trial),
        )
    return TrialResult(
        **common,
        train_seed=train_cfg.seed,
        trace=trace,
        status=pathology_status(trace),
        report=evaluate(params, eval_ds, train_ds),
        consistency=consistency,
    )


def _run_trial_task(task: tuple[ExperimentConfig, str, int, bool]) -> TrialResult:
    return run_trial(*task)


def _run_tasks(
    tasks: list[tuple[ExperimentConfig, str, int, bool]], workers: int
) -> list[TrialResult]:
    if workers == 1 or len(tasks) == 1:
        return [_run_trial_task(task) for task in tasks]
    with Pool(min(workers, len(tasks))) as pool:
        return pool.map(_run_trial_task, tasks)


def run_id(cfg: ExperimentConfig) -> str:
    """First 12 hex digits of the SHA-1 of the effective configuration."""
    return hashlib.sha1(cfg.to_text().encode("utf-8")).hexdigest()[:12]


def _git_revision() -> str:
    try:
        return (
            subprocess.check_output(["git", "rev-parse", "HEAD"], stderr=subprocess.DEVNULL)
            .decode("ascii")
            .strip()
        )
    except (OSError, subprocess.CalledProcessError):
        return "unknown"


def write_manifest(
    path: PathLike,
    command: str,
    cfg: ExperimentConfig,
    outputs: Sequence[Path],
    duration: float,
    extra: Optional[dict[str, Any]] = None,
) -> Path:
    """Write the plain-text ``key = value`` manifest of one run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"run_id = {run_id(cfg)}",
        f"command = {command}",
        f"git_revision = {_git_revision()}",
        f"duration_seconds = {duration:.3f}",
        f"outputs = {', '.join(str(p.relative_to(path.parent)) for p in outputs)}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    lines += [f"config.{line}" for line in cfg.to_text().splitlines()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _write_jsonl(path: Path, results: Sequence[TrialResult]) -> Path:
    with path.open("w", encoding="utf-8") as handle:
        for result in results:
            handle.write(json.dumps(result.to_dict(), separators=(",", ":")) + "\n")
    return path


def _write_summary(path: Path, results: Sequence[TrialResult]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for result in results:
            writer.writerow(result.summary_row())
    return path


def _write_traces(out_dir: Path, results: Sequence[TrialResult]) -> list[Path]:
    paths = []
    for result in results:
        path = out_dir / "traces" / f"{result.arm}_trial{result.trial:02d}.csv"
        result.trace.to_csv(path)
        paths.append(path)
    return paths


def _mean_std(values: Sequence[float]) -> dict[str, Any]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return {"mean": None, "std": None, "runs": 0}
    return {"mean": float(arr.mean()), "std": float(arr.std()), "runs": int(arr.size)}


@dataclass
class ExperimentOutcome:
    name: str
    run_id: str
    metric: ConfusionMetric
    pc_lambda: float
    out_dir: Path
    baseline: list[TrialResult]
    pc: list[TrialResult]
    comparisons: list[Optional[ComparisonReport]]
    exit_code: int = 0
    verdict: str = "ok"
    pathology_flagged: bool = False
    outputs: list[Path] = field(default_factory=list)

    @property
    def gap_shrinkage(self) -> dict[str, Any]:
        """Mean and std of per-trial Δ shrinkage, and whether the mean clears 2 standard errors."""
        values = [
            c.gap_shrinkage
            for c in self.comparisons
            if c is not None and c.gap_shrinkage is not None
        ]
        stats = _mean_std(values)
        if len(values) >= 2:
            se = float(np.std(values, ddof=1) / np.sqrt(len(values)))
            stats["significant_2sigma"] = bool(stats["mean"] > 2.0 * se)
        else:
            stats["significant_2sigma"] = False
        return stats

    def arm_summary(self, results: Sequence[TrialResult]) -> dict[str, Any]:
        done = [r for r in results if r.report is not None]
        return {
            "train_accuracy": _mean_std([r.train_accuracy for r in done]),
            "eval_accuracy": _mean_std([r.report.top1 for r in done]),
            "delta_gap": _mean_std([r.report.delta_gap for r in done]),
            "class_std": _mean_std([r.report.class_stats.std for r in done]),
            "aborted": sum(r.aborted for r in results),
            "status_counts": {
                status.value: sum(r.status is status for r in results)
                for status in PathologyStatus
            },
            "max_final_confusion": max(
                (r.trace.final.mean_confusion for r in results if len(r.trace)), default=None
            ),
        }

    def to_dict(self) -> dict[str, Any]:
        done = [c for c in self.comparisons if c is not None]
        consistency = next((r.consistency for r in self.pc if r.consistency is not None), None)
        return {
            "name": self.name,
            "run_id": self.run_id,
            "metric": self.metric.value,
            "baseline_lambda": 0.0,
            "pc_lambda": self.pc_lambda,
            "baseline": self.arm_summary(self.baseline),
            "pc": self.arm_summary(self.pc),
            "mean_delta": {
                name: _mean_std([getattr(c, name) for c in done if getattr(c, name) is not None])
                for name in _DELTA_FIELDS
            },
            "gap_shrinkage": self.gap_shrinkage,
            "trials": [None if c is None else c.to_dict() for c in self.comparisons],
            "consistency": None if consistency is None else asdict(consistency),
            "pathology_flagged": self.pathology_flagged,
            "verdict": self.verdict,
        }

    def lines(self) -> list[str]:
        """Console summary; contains nothing that varies between identical runs."""
        data = self.to_dict()
        out = [
            f"experiment {self.name} run_id={self.run_id} trials={len(self.baseline)} "
            f"metric={self.metric.value}"
        ]
        for arm, lam in ((BASELINE, 0.0), (PC, self.pc_lambda)):
            s = data[arm]
            out.append(
                f"{arm:<8} lambda={lam:<8g} train={_fmt(s['train_accuracy'])} "
                f"eval={_fmt(s['eval_accuracy'])} gap={_fmt(s['delta_gap'])}pp "
                f"class_std={_fmt(s['class_std'])} aborted={s['aborted']}"
            )
        shrink = data["gap_shrinkage"]
        out.append(
            f"gap shrinkage {_fmt(shrink)}pp "
            f"(2-sigma significant: {'yes' if shrink['significant_2sigma'] else 'no'})"
        )
        if data["consistency"] is not None:
            c = data["consistency"]
            out.append(
                f"sampled confusion {c['sampled']:.6f} vs oracle {c['oracle']:.6f} "
                f"(stderr {c['stderr']:.2e})"
            )
        out.append(f"status: {self.verdict}")
        return out


def _fmt(stats: dict[str, Any]) -> str:
    if stats["mean"] is None:
        return "n/a"
    return f"{stats['mean']:.4f}+-{stats['std']:.4f}"


def _judge(outcome: ExperimentOutcome) -> None:
    baseline_aborts = sum(r.aborted for r in outcome.baseline)
    if baseline_aborts:
        outcome.exit_code, outcome.verdict = 1, f"baseline aborted in {baseline_aborts} trials"
        return
    if outcome.metric is ConfusionMetric.JEFFREYS:
        pathological = sum(r.status is not PathologyStatus.BOUNDED for r in outcome.pc)
        if pathological >= PATHOLOGY_QUORUM * len(outcome.pc):
            outcome.pathology_flagged = True
            outcome.verdict = (
                f"pathology: {pathological}/{len(outcome.pc)} jeffreys trials aborted or growing"
            )
        else:
            outcome.exit_code = 1
            outcome.verdict = (
                f"jeffreys run did not diverge ({pathological}/{len(outcome.pc)} trials)"
            )
        return
    pc_aborts = sum(r.aborted for r in outcome.pc)
    if pc_aborts:
        outcome.exit_code, outcome.verdict = 1, f"pc arm aborted in {pc_aborts} trials"


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[PathLike] = None) -> ExperimentOutcome:
    """
    Train the baseline and PC arms over ``cfg.seeds`` trials and write every report.

    Returns:
        The outcome; ``exit_code`` is 1 when training aborted in a normal run,
        or when a Jeffreys run failed to show its divergence.

    Raises:
        ConfigError: If the batch size does not fit the training split.
    """
    started = time.perf_counter()
    pc_lambda = cfg.pc_lambda(check_runnable(cfg))
    target = Path(out_dir) if out_dir is not None else cfg.out_dir
    target.mkdir(parents=True, exist_ok=True)

    tasks = []
    for arm, lam in ((BASELINE, 0.0), (PC, pc_lambda)):
        with config_context({"train.lam": lam}, base=cfg) as arm_cfg:
            tasks += [
                (arm_cfg, arm, trial, arm == PC and trial == 0) for trial in range(cfg.seeds)
            ]
    logger.info(f"Running {len(tasks)} trials of {cfg.name!r} on {cfg.workers} worker(s)")
    results = _run_tasks(tasks, cfg.workers)
    baseline = [r for r in results if r.arm == BASELINE]
    pc = [r for r in results if r.arm == PC]
    comparisons = [
        compare(b.report, p.report) if b.report is not None and p.report is not None else None
        for b, p in zip(baseline, pc)
    ]

    outcome = ExperimentOutcome(
        name=cfg.name,
        run_id=run_id(cfg),
        metric=cfg.train.metric,
        pc_lambda=pc_lambda,
        out_dir=target,
        baseline=baseline,
        pc=pc,
        comparisons=comparisons,
    )
    _judge(outcome)

    outputs = [
        _write_jsonl(target / "baseline.jsonl", baseline),
        _write_jsonl(target / "pc.jsonl", pc),
        _write_summary(target / "summary.csv", results),
        *_write_traces(target, results),
    ]
    comparison_path = target / "comparison.json"
    comparison_path.write_text(json.dumps(outcome.to_dict(), indent=2) + "\n", encoding="utf-8")
    outputs.append(comparison_path)
    outcome.outputs = outputs
    write_manifest(
        target / "manifest.txt",
        "experiment",
        cfg,
        outputs,
        time.perf_counter() - started,
        {"pc_lambda": repr(pc_lambda), "verdict": outcome.verdict},
    )
    return outcome


@dataclass(frozen=True)
class SweepPoint:
    """Accuracy and Δ across trials for one λ."""

    lam: float
    trials: int
    aborted: int
    train_accuracy: dict[str, Any]
    eval_accuracy: dict[str, Any]
    delta_gap: dict[str, Any]

    def row(self) -> dict[str, Any]:
        return {
            "lambda": self.lam,
            "trials": self.trials,
            "aborted": self.aborted,
            "train_mean": self.train_accuracy["mean"],
            "train_std": self.train_accuracy["std"],
            "eval_mean": self.eval_accuracy["mean"],
            "eval_std": self.eval_accuracy["std"],
            "gap_mean": self.delta_gap["mean"],
            "gap_std": self.delta_gap["std"],
        }


SWEEP_COLUMNS = (
    "lambda",
    "trials",
    "aborted",
    "train_mean",
    "train_std",
    "eval_mean",
    "eval_std",
    "gap_mean",
    "gap_std",
)


def run_sweep(
    cfg: ExperimentConfig, lambdas: Sequence[float], out_dir: Optional[PathLike] = None
) -> list[SweepPoint]:
    """Train ``cfg.seeds`` trials at each λ in ``lambdas``; writes ``sweep.csv`` and a manifest."""
    if not lambdas:
        raise ValueError("need at least one lambda to sweep")
    check_runnable(cfg)
    started = time.perf_counter()
    target = Path(out_dir) if out_dir is not None else cfg.out_dir
    target.mkdir(parents=True, exist_ok=True)

    tasks = []
    for lam in lambdas:
        with config_context({"train.lam": float(lam)}, base=cfg) as lam_cfg:
            tasks += [(lam_cfg, f"lambda={lam:g}", trial, False) for trial in range(cfg.seeds)]
    results = _run_tasks(tasks, cfg.workers)

    points = []
    for k, lam in enumerate(lambdas):
        chunk = results[k * cfg.seeds : (k + 1) * cfg.seeds]
        done = [r for r in chunk if r.report is not None]
        points.append(
            SweepPoint(
                lam=float(lam),
                trials=len(chunk),
                aborted=len(chunk) - len(done),
                train_accuracy=_mean_std([r.train_accuracy for r in done]),
                eval_accuracy=_mean_std([r.report.top1 for r in done]),
                delta_gap=_mean_std([r.report.delta_gap for r in done]),
            )
        )

    sweep_path = target / "sweep.csv"
    with sweep_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for point in points:
            writer.writerow(point.row())
    write_manifest(
        target / "manifest.txt",
        "sweep",
        cfg,
        [sweep_path],
        time.perf_counter() - started,
        {"lambdas": ", ".join(repr(float(lam)) for lam in lambdas)},
    )
    return points


def write_generated(cfg: ExperimentConfig, out_dir: Optional[PathLike] = None) -> list[Path]:
    """Write the trial-0 synthetic train/eval pair of ``cfg`` as CSV, with a manifest."""
    started = time.perf_counter()
    target = Path(out_dir) if out_dir is not None else cfg.out_dir
    spec = replace(cfg.effective_synth(), seed=derive_seed(cfg.seed, DATA_STREAM, 0))
    train_ds, eval_ds = generate(spec)
    outputs = [target / "train.csv", target / "eval.csv"]
    save_csv(train_ds, outputs[0])
    save_csv(eval_ds, outputs[1])
    write_manifest(
        target / "manifest.txt",
        "generate",
        cfg,
        outputs,
        time.perf_counter() - started,
        {"data_seed": spec.seed, "num_classes": spec.num_classes},
    )
    return outputs
