"""Tests for context manager module."""
from dataclasses import dataclass, field

import pytest

from pairconf.config import ExperimentConfig
from pairconf.context_manager import (
    clear_global_config,
    config_context,
    get_base_config,
    get_current_config,
    get_global_config,
    merge_configs,
    set_global_config,
)
from pairconf.trainer import LinearDecay, StepDecay, TrainConfig


@dataclass(frozen=True)
class InnerConfig:
    """Nested test configuration."""
    rate: float = 0.1
    steps: int = 10


@dataclass(frozen=True)
class OuterConfig:
    """Top-level test configuration."""
    name: str = "outer"
    inner: InnerConfig = field(default_factory=InnerConfig)


def test_merge_configs_flat_and_dotted():
    """Plain and dotted keys reach their fields."""
    merged = merge_configs(OuterConfig(), {"name": "x", "inner.steps": 3})
    assert merged.name == "x"
    assert merged.inner == InnerConfig(rate=0.1, steps=3)


def test_merge_configs_none_means_inherit():
    """None values never replace a field."""
    base = OuterConfig(name="kept")
    assert merge_configs(base, {"name": None, "inner.rate": None}) is base
    assert merge_configs(base, None) is base


def test_merge_configs_nested_dataclass_value():
    """A dataclass override merges its non-None fields."""
    merged = merge_configs(OuterConfig(), {"inner": InnerConfig(rate=0.5)})
    assert merged.inner.rate == 0.5


def test_merge_configs_replaces_other_types():
    """A dataclass of a different type replaces the field wholesale."""
    cfg = ExperimentConfig()
    assert isinstance(cfg.train.lr_schedule, LinearDecay)
    merged = merge_configs(cfg, {"train.lr_schedule": StepDecay(step_every=5)})
    assert merged.train.lr_schedule == StepDecay(step_every=5)


def test_merge_configs_errors():
    """Unknown fields, non-dataclass bases and invalid values raise."""
    with pytest.raises(ValueError, match="no field"):
        merge_configs(OuterConfig(), {"missing": 1})
    with pytest.raises(ValueError):
        merge_configs({"name": 1}, {"name": 2})
    with pytest.raises(ValueError):
        merge_configs(ExperimentConfig(), {"train.epochs": 0})


def test_config_context_basic():
    """The yielded config is current inside the block."""
    with config_context({"seeds": 3}) as cfg:
        assert cfg.seeds == 3
        assert get_current_config() is cfg


def test_config_context_nested():
    """Inner scopes layer over outer ones and unwind on exit."""
    with config_context({"train.epochs": 5}):
        with config_context({"train.lam": 2.0}) as inner:
            assert inner.train.epochs == 5
            assert inner.train.lam == 2.0
        assert get_current_config().train.lam == 0.0
    assert get_current_config() == ExperimentConfig()


def test_config_context_with_explicit_base():
    """An explicit base replaces the enclosing scope as starting point."""
    base = ExperimentConfig(name="file", train=TrainConfig(epochs=7))
    with config_context({"seed": 4}, base=base) as cfg:
        assert cfg.name == "file"
        assert cfg.train.epochs == 7
        assert cfg.seed == 4


def test_config_context_cleanup_on_error():
    """The scope is reset even when the block raises."""
    with pytest.raises(RuntimeError):
        with config_context({"seeds": 9}):
            raise RuntimeError("boom")
    assert get_current_config().seeds == ExperimentConfig().seeds


def test_global_config_round_trip():
    """The thread-local base is used when no scope is active."""
    assert get_global_config() is None
    assert get_base_config() == ExperimentConfig()
    custom = ExperimentConfig(name="global")
    set_global_config(custom)
    assert get_global_config() is custom
    assert get_current_config() is custom
    with config_context({"seeds": 2}) as cfg:
        assert cfg.name == "global"
    clear_global_config()
    assert get_global_config() is None
