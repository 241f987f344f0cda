"""
The Pairwise Confusion SGD loop.

Every step draws one aligned batch of pairs from the epoch plan, runs both
members of each pair through the same :class:`NetworkParams` (the two Siamese
branches share weights), accumulates the gradients of both branches into one
buffer, averages over the pairs in the batch and applies a plain SGD update.
With ``lam = 0`` this is ordinary cross-entropy training.

Randomness flows from ``TrainConfig.seed``: parameter initialization and each
epoch's shuffles draw from their own child seeds, so a config reproduces its
trace exactly.
"""

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np
from numpy.typing import NDArray

from pairconf.datasets import Dataset
from pairconf.loss import ConfusionMetric, PairLossConfig, pair_loss, pair_loss_grad
from pairconf.metrics import accuracy
from pairconf.sampler import EpochPlan, PairBatch, derive_seed, iter_pair_batches, plan_epoch
from pairconf.tensor import Activation, GradientBuffer, NetworkParams, backward, forward

logger = logging.getLogger(__name__)

# child-seed keys under TrainConfig.seed
INIT_STREAM = 0
EPOCH_STREAM = 1


@dataclass(frozen=True)
class LinearDecay:
    """lr_initial·(1 − step/total), reaching 0 at the final step."""


@dataclass(frozen=True)
class StepDecay:
    """lr_initial·ratio^⌊step/step_every⌋."""

    step_every: int = 30000
    ratio: float = 0.96

    def __post_init__(self) -> None:
        if self.step_every < 1:
            raise ValueError(f"step_every must be >= 1, got {self.step_every}")
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"step decay ratio must lie in (0, 1], got {self.ratio}")


LRSchedule = Union[LinearDecay, StepDecay]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    lam: float = 0.0
    epochs: int = 60
    batch_size: int = 32
    lr_initial: float = 0.1
    lr_schedule: LRSchedule = field(default_factory=LinearDecay)
    seed: int = 0
    hidden_sizes: tuple[int, ...] = (64,)
    activation: Activation = Activation.RELU
    metric: ConfusionMetric = ConfusionMetric.EUCLIDEAN

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not math.isfinite(self.lr_initial) or self.lr_initial < 0:
            raise ValueError(f"lr_initial must be finite and non-negative, got {self.lr_initial}")
        if not isinstance(self.lr_schedule, (LinearDecay, StepDecay)):
            raise ValueError(f"unknown learning-rate schedule {self.lr_schedule!r}")
        hidden = tuple(int(size) for size in self.hidden_sizes)
        if any(size < 1 for size in hidden):
            raise ValueError(f"hidden sizes must be positive, got {hidden}")
        object.__setattr__(self, "hidden_sizes", hidden)
        object.__setattr__(self, "activation", Activation(self.activation))
        # validates lam and metric
        object.__setattr__(self, "metric", self.loss_config.metric)

    @property
    def loss_config(self) -> PairLossConfig:
        return PairLossConfig(lam=self.lam, metric=self.metric)


class NonFiniteLossError(ArithmeticError):
    """Training produced a non-finite loss or intermediate.

    ``trace`` holds the epochs that completed before the abort.
    """

    def __init__(
        self, epoch: int, batch_index: int, detail: str, trace: Optional["TrainTrace"] = None
    ):
        self.epoch = epoch
        self.batch_index = batch_index
        self.detail = detail
        self.trace = trace if trace is not None else TrainTrace()
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_index}: {detail}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_accuracy: float
    eval_accuracy: float
    mean_ce: float
    mean_confusion: float
    lr: float


@dataclass
class TrainTrace:
    """One :class:`EpochRecord` per completed epoch."""

    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> NDArray[np.float64]:
        return np.array([getattr(record, name) for record in self.records], dtype=np.float64)

    @property
    def final(self) -> EpochRecord:
        if not self.records:
            raise ValueError("trace has no completed epochs")
        return self.records[-1]

    def to_csv(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = [f.name for f in fields(EpochRecord)]
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(names)
            for record in self.records:
                writer.writerow([repr(getattr(record, name)) for name in names])


def default_lambda(num_classes: int) -> float:
    """0.10·N, the middle of the 0.05N to 0.15N range that works best in practice."""
    if num_classes < 2:
        raise ValueError(f"need at least two classes, got {num_classes}")
    return num_classes / 10.0


def lr_at(cfg: TrainConfig, global_step: int, total_steps: int) -> float:
    """Learning rate for ``global_step`` of ``total_steps``.

    Raises:
        ValueError: If ``global_step`` is negative or exceeds ``total_steps``.
    """
    if total_steps < 0 or not 0 <= global_step <= total_steps:
        raise ValueError(f"step {global_step} outside [0, {total_steps}]")
    schedule = cfg.lr_schedule
    if isinstance(schedule, StepDecay):
        return cfg.lr_initial * schedule.ratio ** (global_step // schedule.step_every)
    if total_steps == 0:
        return cfg.lr_initial
    return max(0.0, cfg.lr_initial * (1.0 - global_step / total_steps))


def init_params(cfg: TrainConfig, input_dim: int, num_classes: int) -> NetworkParams:
    """The network a run with ``cfg`` starts from."""
    rng = np.random.default_rng(derive_seed(cfg.seed, INIT_STREAM))
    sizes = [input_dim, *cfg.hidden_sizes, num_classes]
    return NetworkParams.initialize(sizes, cfg.activation, rng)


def epoch_plan(cfg: TrainConfig, dataset_size: int, epoch: int) -> EpochPlan:
    """The pair plan a run with ``cfg`` uses in ``epoch``."""
    return plan_epoch(dataset_size, cfg.batch_size, derive_seed(cfg.seed, EPOCH_STREAM, epoch))


@dataclass
class _EpochTotals:
    ce: float = 0.0
    samples: int = 0
    confusion: float = 0.0
    confused_pairs: int = 0


def _step(
    params: NetworkParams,
    batch: PairBatch,
    loss_cfg: PairLossConfig,
    lr: float,
    totals: _EpochTotals,
) -> None:
    _, cache_a = forward(params, batch.features_a)
    _, cache_b = forward(params, batch.features_b)
    total, parts = pair_loss(
        cache_a.probs, batch.labels_a, cache_b.probs, batch.labels_b, loss_cfg
    )
    if not np.all(np.isfinite(total)):
        raise FloatingPointError("pair loss is not finite")
    grad_a, grad_b = pair_loss_grad(
        cache_a.probs, batch.labels_a, cache_b.probs, batch.labels_b, loss_cfg
    )
    grads = GradientBuffer.zeros_for(params)
    backward(params, cache_a, grad_a, grads)
    backward(params, cache_b, grad_b, grads)
    grads.scale(1.0 / len(batch))
    params.sgd_step(grads, lr)

    confused = batch.gammas.astype(bool)
    totals.ce += float(np.sum(parts.ce1) + np.sum(parts.ce2))
    totals.samples += 2 * len(batch)
    totals.confusion += float(np.sum(np.asarray(parts.confusion)[confused]))
    totals.confused_pairs += int(confused.sum())


def train(
    dataset_train: Dataset, dataset_eval: Dataset, cfg: TrainConfig
) -> tuple[NetworkParams, TrainTrace]:
    """
    Train a fresh network on ``dataset_train`` with the pair loss of ``cfg``.

    Runs ``cfg.epochs × ⌊m / batch_size⌋`` SGD steps. After every epoch both
    datasets are scored with a single branch and an :class:`EpochRecord` is
    appended to the trace.

    Raises:
        ValueError: If the datasets disagree on feature dimension or class
            count, or ``batch_size`` exceeds the training set.
        NonFiniteLossError: If a loss or intermediate turns non-finite; carries
            the epoch, batch index and the partial trace.
    """
    if dataset_train.dim != dataset_eval.dim:
        raise ValueError(
            f"train features have dimension {dataset_train.dim}, eval {dataset_eval.dim}"
        )
    if dataset_train.num_classes != dataset_eval.num_classes:
        raise ValueError(
            f"train set has {dataset_train.num_classes} classes, eval {dataset_eval.num_classes}"
        )
    if cfg.batch_size > len(dataset_train):
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds the {len(dataset_train)} training samples"
        )

    params = init_params(cfg, dataset_train.dim, dataset_train.num_classes)
    loss_cfg = cfg.loss_config
    steps_per_epoch = len(dataset_train) // cfg.batch_size
    total_steps = cfg.epochs * steps_per_epoch
    trace = TrainTrace()
    step = 0
    lr = lr_at(cfg, 0, total_steps)
    logger.debug(
        f"Training {params.layer_sizes} for {cfg.epochs} epochs x {steps_per_epoch} steps, "
        f"lambda={cfg.lam}, metric={cfg.metric.value}"
    )

    for epoch in range(cfg.epochs):
        plan = epoch_plan(cfg, len(dataset_train), epoch)
        totals = _EpochTotals()
        for batch_index, batch in enumerate(iter_pair_batches(plan, dataset_train)):
            lr = lr_at(cfg, step, total_steps)
            try:
                _step(params, batch, loss_cfg, lr, totals)
            except FloatingPointError as exc:
                raise NonFiniteLossError(epoch, batch_index, str(exc), trace) from exc
            step += 1

        try:
            train_accuracy = accuracy(params, dataset_train)
            eval_accuracy = accuracy(params, dataset_eval)
        except FloatingPointError as exc:
            raise NonFiniteLossError(epoch, plan.num_batches - 1, str(exc), trace) from exc
        record = EpochRecord(
            epoch=epoch,
            train_accuracy=train_accuracy,
            eval_accuracy=eval_accuracy,
            mean_ce=totals.ce / totals.samples,
            mean_confusion=(
                totals.confusion / totals.confused_pairs if totals.confused_pairs else 0.0
            ),
            lr=lr,
        )
        trace.records.append(record)
        logger.debug(
            f"epoch {epoch}: train={record.train_accuracy:.4f} eval={record.eval_accuracy:.4f} "
            f"ce={record.mean_ce:.4f} confusion={record.mean_confusion:.4f}"
        )

    return params, trace
