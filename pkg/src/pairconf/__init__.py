"""
pairconf: Pairwise Confusion regularization for small classifiers.

This package trains a two-branch (Siamese) network with the Pairwise Confusion
penalty, certifies the divergence inequalities the penalty rests on, and runs
reproducible baseline-versus-regularized experiments on synthetic
fine-grained data.
"""

__version__ = "0.1.0"

from .simplex import (
    ProbVector,
    euclidean_confusion,
    jeffreys_divergence,
    jeffreys_pathology_bound,
    kl_divergence,
    total_variation,
)
from .pointset import (
    DistributionSet,
    energy_distance,
    energy_distance_sq,
    sampled_set_confusion,
    set_euclidean_confusion,
)
from .tensor import Activation, NetworkParams, forward, predict, predict_proba
from .loss import ConfusionMetric, PairLossConfig, gamma, pair_loss, pair_loss_grad
from .datasets import Dataset, DatasetError, SynthSpec, generate, load_csv, save_csv
from .sampler import derive_seed, plan_epoch
from .trainer import (
    LinearDecay,
    NonFiniteLossError,
    StepDecay,
    TrainConfig,
    TrainTrace,
    default_lambda,
    train,
)
from .metrics import MetricsReport, aggregate, compare, evaluate
from .context_manager import (
    config_context,
    get_current_config,
    merge_configs,
    set_global_config,
)
from .config import ConfigError, ExperimentConfig, load_config
from .certification import run_certification
from .gradcheck import run_gradcheck
from .experiment import run_experiment, run_sweep

__all__ = [
    # Divergences
    "ProbVector",
    "kl_divergence",
    "jeffreys_divergence",
    "total_variation",
    "euclidean_confusion",
    "jeffreys_pathology_bound",
    # Distribution sets
    "DistributionSet",
    "set_euclidean_confusion",
    "energy_distance",
    "energy_distance_sq",
    "sampled_set_confusion",
    # Network
    "Activation",
    "NetworkParams",
    "forward",
    "predict",
    "predict_proba",
    # Loss
    "ConfusionMetric",
    "PairLossConfig",
    "gamma",
    "pair_loss",
    "pair_loss_grad",
    # Data
    "Dataset",
    "DatasetError",
    "SynthSpec",
    "generate",
    "load_csv",
    "save_csv",
    "derive_seed",
    "plan_epoch",
    # Training
    "LinearDecay",
    "StepDecay",
    "TrainConfig",
    "TrainTrace",
    "NonFiniteLossError",
    "default_lambda",
    "train",
    # Evaluation
    "MetricsReport",
    "evaluate",
    "compare",
    "aggregate",
    # Configuration
    "config_context",
    "get_current_config",
    "merge_configs",
    "set_global_config",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    # Runners
    "run_certification",
    "run_gradcheck",
    "run_experiment",
    "run_sweep",
]
