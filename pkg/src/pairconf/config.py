"""
Experiment configuration and its flat ``key = value`` file format.

A config file looks like::

    # confusable desk-scale experiment
    name = confusable
    seeds = 10
    epochs = 60
    lambda = 2.0
    hidden_sizes = 64
    num_clusters = 5
    subclasses_per_cluster = 4

``#`` starts a comment, blank lines are ignored and every key may appear at
most once. Keys absent from the file keep the defaults of
:class:`ExperimentConfig`. Unknown keys and unparsable values are rejected
with the offending line number.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Union

from pairconf.context_manager import merge_configs
from pairconf.datasets import SYNTH_PRESETS, SynthSpec
from pairconf.loss import ConfusionMetric
from pairconf.sampler import derive_seed
from pairconf.tensor import Activation
from pairconf.trainer import LinearDecay, StepDecay, TrainConfig, default_lambda

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "derive_seed",
    "load_config",
    "parse_config_text",
]


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based file line when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything one ``experiment`` or ``sweep`` run needs.

    ``train.lam`` is the λ of a plain training run; the PC arm of an
    experiment uses ``lam``, or ``default_lambda(N)`` when ``lam`` is None.
    ``seed`` is the single root seed; per-trial data and training seeds are
    derived from it.
    """

    name: str = "experiment"
    seed: int = 0
    seeds: int = 10
    lam: Optional[float] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    preset: Optional[str] = None
    train_csv: Optional[Path] = None
    eval_csv: Optional[Path] = None
    standardize: bool = True
    workers: int = 1
    out_dir: Path = Path("runs")

    def __post_init__(self) -> None:
        if self.seeds < 1:
            raise ValueError(f"seeds must be >= 1, got {self.seeds}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.lam is not None and not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.preset is not None and self.preset not in SYNTH_PRESETS:
            raise ValueError(
                f"unknown preset {self.preset!r}; expected one of {sorted(SYNTH_PRESETS)}"
            )
        if (self.train_csv is None) != (self.eval_csv is None):
            raise ValueError("train_csv and eval_csv must be given together")
        for name in ("train_csv", "eval_csv", "out_dir"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, Path):
                object.__setattr__(self, name, Path(value))
        train_size = self.train_size
        if train_size is not None and self.train.batch_size > train_size:
            raise ValueError(
                f"batch_size {self.train.batch_size} exceeds the {train_size} training samples"
            )

    @property
    def uses_csv(self) -> bool:
        return self.train_csv is not None

    @property
    def train_size(self) -> Optional[int]:
        """Training samples per trial, or None when they come from CSV."""
        if self.uses_csv:
            return None
        synth = self.effective_synth()
        return synth.num_classes * synth.train_per_class

    def effective_synth(self) -> SynthSpec:
        """``synth`` with the preset applied."""
        if self.preset is None:
            return self.synth
        return SYNTH_PRESETS[self.preset](self.synth)

    def pc_lambda(self, num_classes: int) -> float:
        return self.lam if self.lam is not None else default_lambda(num_classes)

    def to_text(self) -> str:
        """Render as a config file that :func:`parse_config_text` reads back."""
        train, synth = self.train, self.synth
        lines = [
            f"name = {self.name}",
            f"seed = {self.seed}",
            f"seeds = {self.seeds}",
            f"lambda = {'default' if self.lam is None else repr(self.lam)}",
            f"epochs = {train.epochs}",
            f"batch_size = {train.batch_size}",
            f"lr = {train.lr_initial!r}",
        ]
        if isinstance(train.lr_schedule, StepDecay):
            lines += [
                "lr_schedule = step",
                f"step_every = {train.lr_schedule.step_every}",
                f"step_ratio = {train.lr_schedule.ratio!r}",
            ]
        else:
            lines.append("lr_schedule = linear")
        lines += [
            f"hidden_sizes = {','.join(str(size) for size in train.hidden_sizes)}",
            f"activation = {train.activation.value}",
            f"metric = {train.metric.value}",
            f"num_clusters = {synth.num_clusters}",
            f"subclasses_per_cluster = {synth.subclasses_per_cluster}",
            f"dim = {synth.dim}",
            f"samples_per_class = {synth.samples_per_class}",
            f"cluster_separation = {synth.cluster_separation!r}",
            f"subclass_separation = {synth.subclass_separation!r}",
            f"noise = {synth.noise!r}",
            f"train_fraction = {synth.train_fraction!r}",
            f"preset = {self.preset or 'none'}",
            f"standardize = {str(self.standardize).lower()}",
            f"workers = {self.workers}",
            f"out_dir = {self.out_dir}",
        ]
        if self.uses_csv:
            lines += [f"train_csv = {self.train_csv}", f"eval_csv = {self.eval_csv}"]
        return "\n".join(lines) + "\n"


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError(f"expected a positive integer, got {value}")
    return value


def _lambda(text: str) -> Optional[float]:
    if text.lower() == "default":
        return None
    return float(text)


def _hidden_sizes(text: str) -> tuple[int, ...]:
    if text.lower() in ("", "none"):
        return ()
    return tuple(_positive_int(part.strip()) for part in text.split(","))


def _boolean(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _optional_str(text: str) -> Optional[str]:
    return None if text.lower() == "none" else text


# file key -> (dotted field path, converter)
_FIELDS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "name": ("name", str),
    "seed": ("seed", int),
    "seeds": ("seeds", _positive_int),
    "lambda": ("lam", _lambda),
    "epochs": ("train.epochs", _positive_int),
    "batch_size": ("train.batch_size", _positive_int),
    "lr": ("train.lr_initial", float),
    "hidden_sizes": ("train.hidden_sizes", _hidden_sizes),
    "activation": ("train.activation", Activation),
    "metric": ("train.metric", ConfusionMetric.parse),
    "num_clusters": ("synth.num_clusters", _positive_int),
    "subclasses_per_cluster": ("synth.subclasses_per_cluster", _positive_int),
    "dim": ("synth.dim", _positive_int),
    "samples_per_class": ("synth.samples_per_class", _positive_int),
    "cluster_separation": ("synth.cluster_separation", float),
    "subclass_separation": ("synth.subclass_separation", float),
    "noise": ("synth.noise", float),
    "train_fraction": ("synth.train_fraction", float),
    "preset": ("preset", _optional_str),
    "standardize": ("standardize", _boolean),
    "train_csv": ("train_csv", Path),
    "eval_csv": ("eval_csv", Path),
    "workers": ("workers", _positive_int),
    "out_dir": ("out_dir", Path),
}
_SCHEDULE_KEYS = {"lr_schedule": str, "step_every": _positive_int, "step_ratio": float}


def _schedule(values: dict[str, Any]) -> Union[LinearDecay, StepDecay, None]:
    if not values:
        return None
    # step_every / step_ratio on their own imply a step schedule
    kind = str(values.get("lr_schedule", "step")).lower()
    if kind in ("linear", "linear_decay"):
        if "step_every" in values or "step_ratio" in values:
            raise ConfigError("step_every/step_ratio need lr_schedule = step")
        return LinearDecay()
    if kind not in ("step", "step_decay"):
        raise ConfigError(f"unknown lr_schedule {kind!r}; expected 'linear' or 'step'")
    defaults = StepDecay()
    return StepDecay(
        step_every=values.get("step_every", defaults.step_every),
        ratio=values.get("step_ratio", defaults.ratio),
    )


def parse_config_text(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """
    Parse config-file text into an :class:`ExperimentConfig`.

    Args:
        text: File contents.
        base: Config whose values absent keys keep; defaults to ``ExperimentConfig()``.

    Raises:
        ConfigError: On a malformed line, an unknown or repeated key, a bad
            value, or a combination of values that fails validation.
    """
    overrides: dict[str, Any] = {}
    schedule_values: dict[str, Any] = {}
    seen: dict[str, int] = {}
    cleared: list[str] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line_no)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", line_no)
        seen[key] = line_no
        if key in _SCHEDULE_KEYS:
            target, convert = key, _SCHEDULE_KEYS[key]
        elif key in _FIELDS:
            target, convert = _FIELDS[key]
        else:
            raise ConfigError(f"unknown key {key!r}", line_no)
        try:
            converted = convert(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", line_no) from None
        if key in _SCHEDULE_KEYS:
            schedule_values[key] = converted
        elif converted is None:
            # "none"/"default" resets; merge_configs would read None as inherit
            cleared.append(target)
        else:
            overrides[target] = converted

    try:
        schedule = _schedule(schedule_values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if schedule is not None:
        overrides["train.lr_schedule"] = schedule

    config = base if base is not None else ExperimentConfig()
    try:
        if cleared:
            config = replace(config, **{name: None for name in cleared})
        config = merge_configs(config, overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    logger.debug(f"Parsed config {config.name!r} with {len(seen)} keys")
    return config


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and parse a config file.

    Raises:
        ConfigError: If the file cannot be read or does not parse.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)
