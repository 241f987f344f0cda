"""Tests for trainer module."""
import csv

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

import pairconf.trainer as trainer_module
from pairconf.loss import ConfusionMetric, PairLossConfig, cross_entropy_grad, pair_loss_grad
from pairconf.sampler import iter_pair_batches
from pairconf.tensor import GradientBuffer, backward, forward
from pairconf.trainer import (
    LinearDecay,
    NonFiniteLossError,
    StepDecay,
    TrainConfig,
    TrainTrace,
    default_lambda,
    epoch_plan,
    init_params,
    lr_at,
    train,
)


def test_train_config_validation():
    """Bad hyperparameters are rejected at construction."""
    for kwargs in (
        {"epochs": 0},
        {"batch_size": 0},
        {"lr_initial": -0.1},
        {"lr_initial": float("nan")},
        {"lam": -1.0},
        {"hidden_sizes": (4, 0)},
        {"metric": "kl"},
    ):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


def test_train_config_normalizes_fields():
    """String activation and metric are parsed; hidden sizes become a tuple."""
    cfg = TrainConfig(activation="tanh", metric="jeffreys", hidden_sizes=[3, 2])
    assert cfg.activation.value == "tanh"
    assert cfg.metric is ConfusionMetric.JEFFREYS
    assert cfg.hidden_sizes == (3, 2)
    assert cfg.loss_config == PairLossConfig(lam=0.0, metric=ConfusionMetric.JEFFREYS)


def test_step_decay_validation():
    """Step decay needs a positive period and a ratio in (0, 1]."""
    with pytest.raises(ValueError):
        StepDecay(step_every=0)
    with pytest.raises(ValueError):
        StepDecay(ratio=1.5)


def test_default_lambda():
    """λ defaults to a tenth of the class count."""
    assert default_lambda(200) == pytest.approx(20.0)
    assert default_lambda(100) == pytest.approx(10.0)
    assert default_lambda(2) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        default_lambda(1)


def test_linear_decay_schedule():
    """Linear decay falls from lr_initial to zero at the final step."""
    cfg = TrainConfig(lr_initial=0.2, lr_schedule=LinearDecay())
    assert lr_at(cfg, 0, 100) == pytest.approx(0.2)
    assert lr_at(cfg, 50, 100) == pytest.approx(0.1)
    assert lr_at(cfg, 100, 100) == 0.0
    assert lr_at(cfg, 0, 0) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        lr_at(cfg, 101, 100)
    with pytest.raises(ValueError):
        lr_at(cfg, -1, 100)


def test_step_decay_schedule():
    """Step decay multiplies by the ratio every step_every steps."""
    cfg = TrainConfig(lr_initial=0.1, lr_schedule=StepDecay())
    assert lr_at(cfg, 29_999, 100_000) == pytest.approx(0.1)
    assert lr_at(cfg, 30_000, 100_000) == pytest.approx(0.096)
    assert lr_at(cfg, 60_000, 100_000) == pytest.approx(0.1 * 0.9216)


def _reference_cross_entropy_run(train_ds, cfg):
    """Plain two-stream cross-entropy SGD written out step by step."""
    params = init_params(cfg, train_ds.dim, train_ds.num_classes)
    steps_per_epoch = len(train_ds) // cfg.batch_size
    total = cfg.epochs * steps_per_epoch
    step = 0
    for epoch in range(cfg.epochs):
        for batch in iter_pair_batches(epoch_plan(cfg, len(train_ds), epoch), train_ds):
            lr = lr_at(cfg, step, total)
            _, cache_a = forward(params, batch.features_a)
            _, cache_b = forward(params, batch.features_b)
            grads = GradientBuffer.zeros_for(params)
            backward(params, cache_a, cross_entropy_grad(cache_a.probs, batch.labels_a), grads)
            backward(params, cache_b, cross_entropy_grad(cache_b.probs, batch.labels_b), grads)
            grads.scale(1.0 / len(batch))
            params.sgd_step(grads, lr)
            step += 1
    return params


def test_zero_lambda_is_plain_cross_entropy_training(tiny_data, fast_train_config):
    """λ = 0 reproduces cross-entropy SGD bit for bit."""
    train_ds, eval_ds = tiny_data
    params, _ = train(train_ds, eval_ds, fast_train_config)
    reference = _reference_cross_entropy_run(train_ds, fast_train_config)
    assert params.equals(reference)


def test_zero_learning_rate_leaves_parameters_unchanged(tiny_data, fast_train_config):
    """With lr = 0 the trained network is the initial one."""
    from dataclasses import replace

    cfg = replace(fast_train_config, lr_initial=0.0, lam=1.0)
    train_ds, eval_ds = tiny_data
    params, trace = train(train_ds, eval_ds, cfg)
    assert params.equals(init_params(cfg, train_ds.dim, train_ds.num_classes))
    assert all(record.lr == 0.0 for record in trace.records)


def test_single_step_matches_hand_assembled_siamese_gradient(tiny_data):
    """One full-batch step equals θ − lr·mean of per-pair gradients through both branches."""
    train_ds, eval_ds = tiny_data
    cfg = TrainConfig(
        lam=1.5, epochs=1, batch_size=len(train_ds), lr_initial=0.3, hidden_sizes=(5,), seed=2
    )
    params, _ = train(train_ds, eval_ds, cfg)

    start = init_params(cfg, train_ds.dim, train_ds.num_classes)
    batch = next(iter_pair_batches(epoch_plan(cfg, len(train_ds), 0), train_ds))
    grads = GradientBuffer.zeros_for(start)
    for a, b, _ in batch.pairs:
        _, cache_a = forward(start, a.features)
        _, cache_b = forward(start, b.features)
        pa, pb = cache_a.probs[0], cache_b.probs[0]
        g1, g2 = pair_loss_grad(pa, a.label, pb, b.label, cfg.loss_config)
        backward(start, cache_a, g1, grads)
        backward(start, cache_b, g2, grads)
    for param, before, grad in zip(params.arrays(), start.arrays(), grads.arrays()):
        np.testing.assert_allclose(param, before - 0.3 * grad / len(batch), rtol=1e-10, atol=1e-12)


def test_training_is_deterministic(tiny_data, fast_train_config):
    """Same data and config give identical parameters and traces."""
    from dataclasses import replace

    cfg = replace(fast_train_config, lam=0.4)
    train_ds, eval_ds = tiny_data
    first, trace1 = train(train_ds, eval_ds, cfg)
    second, trace2 = train(train_ds, eval_ds, cfg)
    assert first.equals(second)
    assert trace1.records == trace2.records


def test_trace_records_every_epoch(tiny_data, fast_train_config):
    """One record per epoch with sane values."""
    train_ds, eval_ds = tiny_data
    _, trace = train(train_ds, eval_ds, fast_train_config)
    assert len(trace) == fast_train_config.epochs
    assert [r.epoch for r in trace.records] == [0, 1, 2]
    for record in trace.records:
        assert 0.0 <= record.train_accuracy <= 1.0
        assert 0.0 <= record.eval_accuracy <= 1.0
        assert record.mean_ce > 0
        assert 0.0 <= record.mean_confusion <= 2.0
    lrs = trace.column("lr")
    assert np.all(np.diff(lrs) < 0)


def test_separable_problem_is_learned(separable_data):
    """A linear softmax model separates two far-apart blobs, as logistic regression does."""
    cfg = TrainConfig(epochs=40, batch_size=8, lr_initial=0.5, hidden_sizes=(), seed=1)
    _, trace = train(separable_data, separable_data, cfg)
    assert trace.final.train_accuracy == 1.0
    oracle = LogisticRegression().fit(separable_data.features, separable_data.labels)
    assert oracle.score(separable_data.features, separable_data.labels) == 1.0


def test_strong_confusion_lowers_pair_confusion(tiny_data):
    """A large λ ends with smaller cross-class confusion than λ = 0."""
    from dataclasses import replace

    base = TrainConfig(epochs=20, batch_size=8, lr_initial=0.1, hidden_sizes=(8,), seed=4)
    train_ds, eval_ds = tiny_data
    _, plain = train(train_ds, eval_ds, base)
    _, confused = train(train_ds, eval_ds, replace(base, lam=10.0))
    assert confused.final.mean_confusion < plain.final.mean_confusion


def test_jeffreys_confusion_keeps_rising_on_separable_data(separable_data):
    """With a tiny λ and constant lr the Jeffreys term climbs past the Euclidean ceiling."""
    from dataclasses import replace

    cfg = TrainConfig(
        lam=1e-5,
        epochs=40,
        batch_size=8,
        lr_initial=0.1,
        lr_schedule=StepDecay(step_every=1, ratio=1.0),
        metric="jeffreys",
        hidden_sizes=(8,),
        seed=2,
    )
    _, trace = train(separable_data, separable_data, cfg)
    tail = trace.column("mean_confusion")[len(trace) // 2 :]
    assert np.all(np.isfinite(tail))
    assert tail[-5:].mean() > tail[:5].mean()
    assert trace.final.mean_confusion > 2.0

    _, euclidean = train(separable_data, separable_data, replace(cfg, metric="ec"))
    assert np.all(euclidean.column("mean_confusion") <= 2.0)


def test_non_finite_loss_aborts_with_partial_trace(tiny_data, fast_train_config, monkeypatch):
    """A NaN loss in epoch 1 raises with the completed epoch in the trace."""
    real_pair_loss = trainer_module.pair_loss
    calls = {"n": 0}

    def poisoned(*args, **kwargs):
        calls["n"] += 1
        total, parts = real_pair_loss(*args, **kwargs)
        if calls["n"] == 4:
            return np.full_like(total, np.nan), parts
        return total, parts

    monkeypatch.setattr(trainer_module, "pair_loss", poisoned)
    train_ds, eval_ds = tiny_data
    with pytest.raises(NonFiniteLossError) as info:
        train(train_ds, eval_ds, fast_train_config)
    assert info.value.epoch == 1
    assert info.value.batch_index == 0
    assert len(info.value.trace) == 1


def test_train_rejects_mismatched_inputs(tiny_data, separable_data, fast_train_config):
    """Dimension mismatch and oversized batches are errors."""
    from dataclasses import replace

    train_ds, eval_ds = tiny_data
    with pytest.raises(ValueError):
        train(train_ds, separable_data, fast_train_config)
    with pytest.raises(ValueError):
        train(train_ds, eval_ds, replace(fast_train_config, batch_size=len(train_ds) + 1))


def test_trace_csv_and_empty_trace(tmp_path):
    """Traces write a header row; an empty trace has no final record."""
    trace = TrainTrace()
    with pytest.raises(ValueError):
        _ = trace.final
    trace.records.append(trainer_module.EpochRecord(0, 0.5, 0.25, 1.0, 0.1, 0.01))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    with path.open() as handle:
        rows = list(csv.DictReader(handle))
    assert rows[0]["epoch"] == "0"
    assert float(rows[0]["eval_accuracy"]) == 0.25
