"""Tests for tensor module."""
import numpy as np
import pytest

from pairconf.tensor import (
    Activation,
    GradientBuffer,
    NetworkParams,
    backward,
    backward_logits,
    cross_entropy,
    forward,
    predict,
    predict_proba,
    softmax,
)


def test_initialize_shapes(rng):
    """Layer sizes map to (out, in) weights and zero biases."""
    params = NetworkParams.initialize([5, 7, 3], "tanh", rng)
    assert params.layer_sizes == [5, 7, 3]
    assert params.input_dim == 5
    assert params.num_classes == 3
    assert params.activation is Activation.TANH
    assert [w.shape for w in params.weights] == [(7, 5), (3, 7)]
    assert all(np.all(b == 0) for b in params.biases)


def test_initialize_is_seeded():
    """The same seed yields bit-identical parameters."""
    a = NetworkParams.initialize([4, 6, 2], "relu", np.random.default_rng(9))
    b = NetworkParams.initialize([4, 6, 2], "relu", np.random.default_rng(9))
    c = NetworkParams.initialize([4, 6, 2], "relu", np.random.default_rng(10))
    assert a.equals(b)
    assert not a.equals(c)


def test_params_validation():
    """Mismatched layers, non-finite entries and one-class outputs are rejected."""
    with pytest.raises(ValueError):
        NetworkParams([np.zeros((3, 2))], [np.zeros(2)])
    with pytest.raises(ValueError):
        NetworkParams([np.zeros((3, 2)), np.zeros((2, 4))], [np.zeros(3), np.zeros(2)])
    with pytest.raises(ValueError):
        NetworkParams([np.full((2, 2), np.nan)], [np.zeros(2)])
    with pytest.raises(ValueError):
        NetworkParams([np.zeros((1, 2))], [np.zeros(1)])


def test_softmax_is_stable():
    """Huge logits do not overflow and rows sum to one."""
    probs = softmax([[1000.0, 1000.0], [-1000.0, 0.0]])
    np.testing.assert_allclose(probs[0], [0.5, 0.5])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    assert probs[1, 1] == pytest.approx(1.0)


def test_forward_single_and_batch_agree(tiny_params, rng):
    """A batch row gives the same logits as the vector on its own."""
    batch = rng.normal(size=(4, 3))
    logits, cache = forward(tiny_params, batch)
    assert logits.shape == (4, 3)
    assert cache.probs.shape == (4, 3)
    single, single_cache = forward(tiny_params, batch[2])
    assert single.shape == (3,)
    assert single_cache.single
    np.testing.assert_allclose(single, logits[2])


def test_forward_rejects_bad_input(tiny_params):
    """Wrong width raises ValueError, non-finite input FloatingPointError."""
    with pytest.raises(ValueError):
        forward(tiny_params, np.zeros(4))
    with pytest.raises(FloatingPointError):
        forward(tiny_params, np.array([0.0, np.inf, 1.0]))


def test_forward_flags_overflowing_layer():
    """Pre-activations that overflow are reported instead of propagated."""
    params = NetworkParams([np.full((2, 1), 1e308)], [np.zeros(2)])
    with pytest.raises(FloatingPointError):
        forward(params, np.array([10.0]))


def test_backward_logits_matches_finite_difference(rng):
    """∂(v·z)/∂θ from backward agrees with central differences."""
    params = NetworkParams.initialize([3, 5, 4], "tanh", rng)
    x = rng.normal(size=(2, 3))
    v = rng.normal(size=(2, 4))

    def objective():
        logits, _ = forward(params, x)
        return float(np.sum(v * logits))

    _, cache = forward(params, x)
    grads = GradientBuffer.zeros_for(params)
    backward_logits(params, cache, v, grads)

    step = 1e-6
    for param, grad in zip(params.arrays(), grads.arrays()):
        for idx in np.ndindex(param.shape):
            original = param[idx]
            param[idx] = original + step
            upper = objective()
            param[idx] = original - step
            lower = objective()
            param[idx] = original
            assert grad[idx] == pytest.approx((upper - lower) / (2 * step), abs=1e-6)


def test_backward_accumulates(tiny_params, rng):
    """Two backward calls add into the same buffer."""
    x = rng.normal(size=(2, 3))
    g = rng.normal(size=(2, 3))
    _, cache = forward(tiny_params, x)
    once = GradientBuffer.zeros_for(tiny_params)
    backward(tiny_params, cache, g, once)
    twice = GradientBuffer.zeros_for(tiny_params)
    backward(tiny_params, cache, g, twice)
    backward(tiny_params, cache, g, twice)
    for a, b in zip(once.arrays(), twice.arrays()):
        np.testing.assert_allclose(b, 2.0 * a)


def test_backward_shape_mismatch(tiny_params, rng):
    """A gradient of the wrong shape is rejected."""
    _, cache = forward(tiny_params, rng.normal(size=(2, 3)))
    with pytest.raises(ValueError):
        backward(tiny_params, cache, np.zeros((3, 3)), GradientBuffer.zeros_for(tiny_params))


def test_sgd_step_and_zero_lr(tiny_params, rng):
    """A zero learning rate leaves θ bit-identical; a positive one moves it."""
    _, cache = forward(tiny_params, rng.normal(size=(2, 3)))
    grads = GradientBuffer.zeros_for(tiny_params)
    backward(tiny_params, cache, rng.normal(size=(2, 3)), grads)
    before = tiny_params.copy()
    tiny_params.sgd_step(grads, 0.0)
    assert tiny_params.equals(before)
    tiny_params.sgd_step(grads, 0.1)
    assert not tiny_params.equals(before)


def test_gradient_buffer_helpers(tiny_params):
    """scale, zero and congruence checks."""
    grads = GradientBuffer.zeros_for(tiny_params)
    for arr in grads.arrays():
        arr += 1.0
    grads.scale(0.5)
    assert all(np.all(arr == 0.5) for arr in grads.arrays())
    grads.zero()
    assert all(np.all(arr == 0.0) for arr in grads.arrays())
    other = NetworkParams.initialize([3, 2], "relu", np.random.default_rng(0))
    with pytest.raises(ValueError):
        grads.check_congruent(other)


def test_cross_entropy_values_and_floor():
    """−log p[y], floored at 1e-30."""
    assert cross_entropy([0.25, 0.75], 1) == pytest.approx(-np.log(0.75))
    assert cross_entropy([1.0, 0.0], 1) == pytest.approx(-np.log(1e-30))
    losses = cross_entropy(np.array([[0.5, 0.5], [0.1, 0.9]]), np.array([0, 1]))
    np.testing.assert_allclose(losses, [np.log(2.0), -np.log(0.9)])


def test_cross_entropy_rejects_bad_labels():
    """Out-of-range and non-integer labels raise."""
    with pytest.raises(ValueError):
        cross_entropy([0.5, 0.5], 2)
    with pytest.raises(ValueError):
        cross_entropy([0.5, 0.5], 0.0)


def test_predict_breaks_ties_low():
    """Equal probabilities predict the lowest class index."""
    params = NetworkParams([np.zeros((3, 2))], [np.zeros(3)])
    assert predict(params, np.array([1.0, -1.0])) == 0
    np.testing.assert_array_equal(predict(params, np.ones((2, 2))), [0, 0])
    np.testing.assert_allclose(predict_proba(params, np.ones(2)), [1 / 3, 1 / 3, 1 / 3])
