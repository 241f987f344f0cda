"""Pytest configuration and shared fixtures."""
import numpy as np
import pytest

from pairconf.config import ExperimentConfig
from pairconf.datasets import Dataset, SynthSpec, generate
from pairconf.tensor import Activation, NetworkParams
from pairconf.trainer import TrainConfig


@pytest.fixture(autouse=True)
def reset_global_config():
    """Clear the thread-local base config around every test."""
    import pairconf.context_manager as context_module

    context_module.clear_global_config()
    yield
    context_module.clear_global_config()


@pytest.fixture
def rng():
    """A fixed-seed generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_spec():
    """Two clusters of two subclasses, a handful of samples each."""
    return SynthSpec(
        num_clusters=2,
        subclasses_per_cluster=2,
        dim=4,
        samples_per_class=12,
        cluster_separation=8.0,
        subclass_separation=1.0,
        noise=0.5,
        seed=3,
    )


@pytest.fixture
def tiny_data(tiny_spec):
    """(train, eval) drawn from ``tiny_spec``."""
    return generate(tiny_spec)


@pytest.fixture
def separable_data():
    """Two well-separated blobs in the plane, 20 points each."""
    gen = np.random.default_rng(7)
    left = gen.normal(loc=(-4.0, 0.0), scale=0.5, size=(20, 2))
    right = gen.normal(loc=(4.0, 0.0), scale=0.5, size=(20, 2))
    features = np.concatenate([left, right])
    labels = np.repeat([0, 1], 20)
    return Dataset(features, labels, 2)


@pytest.fixture
def tiny_params(rng):
    """A 3-4-3 ReLU network."""
    return NetworkParams.initialize([3, 4, 3], Activation.RELU, rng)


@pytest.fixture
def fast_train_config():
    """A few epochs of small-batch training."""
    return TrainConfig(epochs=3, batch_size=8, lr_initial=0.05, hidden_sizes=(8,), seed=11)


@pytest.fixture
def tiny_experiment(tiny_spec, fast_train_config, tmp_path):
    """A two-trial experiment over ``tiny_spec`` writing into ``tmp_path``."""
    return ExperimentConfig(
        name="tiny",
        seed=5,
        seeds=2,
        train=fast_train_config,
        synth=tiny_spec,
        out_dir=tmp_path / "runs",
    )
