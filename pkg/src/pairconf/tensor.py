"""
Dense numeric core for multilayer softmax classifiers.

Forward passes record every intermediate in a :class:`ForwardCache`; backward
passes replay it in reverse and accumulate (+=) parameter gradients into a
:class:`GradientBuffer`. All numerics are float64.

Shapes follow the usual convention for a dense layer, ``z = W·a + b`` with
``W`` of shape ``(out, in)``. Inputs may be a single feature vector ``(d,)`` or
a batch ``(B, d)``; a batch is evaluated row by row in one matrix product.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-30

Array = NDArray[np.float64]


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"


def _activate(kind: Activation, z: Array) -> Array:
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activation_grad(kind: Activation, z: Array, a: Array) -> Array:
    if kind is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


@dataclass(eq=False)
class NetworkParams:
    """Weights and biases θ of a dense network.

    ``weights[k]`` has shape ``(out_k, in_k)`` and ``biases[k]`` shape
    ``(out_k,)``; hidden layers use ``activation``, the last layer emits logits.
    """

    weights: list[Array]
    biases: list[Array]
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        self.activation = Activation(self.activation)
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64) for b in self.biases]
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError(
                f"need matching non-empty weight/bias lists, got "
                f"{len(self.weights)} weights and {len(self.biases)} biases"
            )
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} do not match")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(
                    f"layer {k} expects {w.shape[1]} inputs but layer {k - 1} "
                    f"emits {self.weights[k - 1].shape[0]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} has non-finite parameters")
        if self.num_classes < 2:
            raise ValueError(f"final layer must emit >= 2 classes, got {self.num_classes}")

    @classmethod
    def initialize(
        cls,
        layer_sizes: Sequence[int],
        activation: Union[Activation, str],
        rng: np.random.Generator,
    ) -> "NetworkParams":
        """Scaled uniform init: W ~ U(±√(6/(fan_in + fan_out))), zero biases.

        Args:
            layer_sizes: ``[input_dim, *hidden_sizes, num_classes]``.
            activation: Hidden-layer nonlinearity.
            rng: Seeded generator; the same seed gives the same network.
        """
        if len(layer_sizes) < 2 or any(size < 1 for size in layer_sizes):
            raise ValueError(f"invalid layer sizes {list(layer_sizes)}")
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, Activation(activation))

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.weights[-1].shape[0])

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation
        )

    def arrays(self) -> list[Array]:
        """Every parameter array, weights and biases interleaved by layer."""
        return [arr for pair in zip(self.weights, self.biases) for arr in pair]

    def sgd_step(self, grads: "GradientBuffer", lr: float) -> None:
        """In-place θ ← θ − lr·g."""
        grads.check_congruent(self)
        for param, grad in zip(self.arrays(), grads.arrays()):
            param -= lr * grad

    def equals(self, other: "NetworkParams") -> bool:
        """Bit-exact equality of every parameter."""
        if self.activation is not other.activation or len(self.weights) != len(other.weights):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


@dataclass(eq=False)
class GradientBuffer:
    """Accumulated ∂L/∂θ, shape-congruent with one NetworkParams."""

    weights: list[Array]
    biases: list[Array]

    @classmethod
    def zeros_for(cls, params: NetworkParams) -> "GradientBuffer":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )

    def arrays(self) -> list[Array]:
        return [arr for pair in zip(self.weights, self.biases) for arr in pair]

    def zero(self) -> None:
        for arr in self.arrays():
            arr.fill(0.0)

    def scale(self, factor: float) -> None:
        for arr in self.arrays():
            arr *= factor

    def check_congruent(self, params: NetworkParams) -> None:
        ours = [a.shape for a in self.arrays()]
        theirs = [a.shape for a in params.arrays()]
        if ours != theirs:
            raise ValueError(f"gradient buffer shapes {ours} do not match parameters {theirs}")


@dataclass(frozen=True)
class ForwardCache:
    """Everything :func:`backward` needs from one forward call.

    ``inputs[k]`` is the input to layer k (``inputs[0]`` is the feature batch),
    ``pre_activations[k]`` its output before the nonlinearity (the last one is
    the logits) and ``probs`` the softmax of the logits. Arrays are 2-D;
    ``single`` records a 1-D call so gradients can be reshaped to match.
    """

    inputs: tuple[Array, ...]
    pre_activations: tuple[Array, ...]
    probs: Array
    single: bool = False


def softmax(logits: ArrayLike) -> Array:
    """Softmax over the last axis, max-subtracted so large logits cannot overflow.

    Each row of the result is a valid ProbVector.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise ValueError("softmax needs a non-empty logit vector")
    shifted = z - z.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def forward(params: NetworkParams, x: ArrayLike) -> tuple[Array, ForwardCache]:
    """Evaluate the network on one feature vector or a batch of rows.

    Returns:
        (logits, cache); logits are ``(N,)`` for a vector input, ``(B, N)`` for a batch.

    Raises:
        ValueError: If the feature dimension does not match the first layer.
        FloatingPointError: If an input or intermediate is non-finite.
    """
    features = np.asarray(x, dtype=np.float64)
    single = features.ndim == 1
    batch = np.atleast_2d(features)
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise ValueError(
            f"input of shape {features.shape} does not match network input dim {params.input_dim}"
        )
    if not np.all(np.isfinite(batch)):
        raise FloatingPointError("non-finite input features")

    inputs = [batch]
    pre_activations = []
    last = len(params.weights) - 1
    with np.errstate(over="ignore", invalid="ignore"):
        for k, (w, b) in enumerate(zip(params.weights, params.biases)):
            z = inputs[-1] @ w.T + b
            if not np.all(np.isfinite(z)):
                raise FloatingPointError(f"non-finite pre-activation in layer {k}")
            pre_activations.append(z)
            if k < last:
                inputs.append(_activate(params.activation, z))
    logits = pre_activations[-1]
    cache = ForwardCache(tuple(inputs), tuple(pre_activations), softmax(logits), single)
    return (logits[0] if single else logits), cache


def backward_logits(
    params: NetworkParams,
    cache: ForwardCache,
    logit_grad: ArrayLike,
    grads: GradientBuffer,
) -> Array:
    """Accumulate ∂L/∂θ given ∂L/∂logits; returns ∂L/∂x in the input's shape."""
    grads.check_congruent(params)
    delta = np.atleast_2d(np.asarray(logit_grad, dtype=np.float64))
    if delta.shape != cache.pre_activations[-1].shape:
        raise ValueError(
            f"logit gradient shape {np.shape(logit_grad)} does not match "
            f"cached logits {cache.pre_activations[-1].shape}"
        )
    for k in range(len(params.weights) - 1, -1, -1):
        grads.weights[k] += delta.T @ cache.inputs[k]
        grads.biases[k] += delta.sum(axis=0)
        delta = delta @ params.weights[k]
        if k > 0:
            delta = delta * _activation_grad(
                params.activation, cache.pre_activations[k - 1], cache.inputs[k]
            )
    return delta[0] if cache.single else delta


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    output_grad: ArrayLike,
    grads: GradientBuffer,
) -> Array:
    """Accumulate ∂L/∂θ given ∂L/∂p, the gradient with respect to softmax outputs.

    Chains through the softmax Jacobian, ∂L/∂z = p ⊙ (g − ⟨g, p⟩), then through
    every layer.
    """
    g = np.atleast_2d(np.asarray(output_grad, dtype=np.float64))
    p = cache.probs
    if g.shape != p.shape:
        raise ValueError(
            f"output gradient shape {np.shape(output_grad)} does not match probs {p.shape}"
        )
    logit_grad = p * (g - (g * p).sum(axis=-1, keepdims=True))
    return backward_logits(params, cache, logit_grad, grads)


def cross_entropy(probs: ArrayLike, labels: ArrayLike) -> Union[float, Array]:
    """−log p[label], with p floored at 1e-30.

    Accepts one probability vector and an integer label, or a ``(B, N)`` batch
    with ``(B,)`` labels (returning ``(B,)`` losses).
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    if p.ndim == 0 or y.shape != p.shape[:-1]:
        raise ValueError(f"labels of shape {y.shape} do not match probs of shape {p.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {y.dtype}")
    if np.any(y < 0) or np.any(y >= p.shape[-1]):
        raise ValueError(f"label out of range [0, {p.shape[-1]})")
    picked = np.take_along_axis(p, y[..., None], axis=-1)[..., 0]
    losses = -np.log(np.maximum(picked, PROB_FLOOR))
    return float(losses) if losses.ndim == 0 else losses


def predict_proba(params: NetworkParams, x: ArrayLike) -> Array:
    """Single-branch inference: softmax(forward(x))."""
    _, cache = forward(params, x)
    return cache.probs[0] if cache.single else cache.probs


def predict(params: NetworkParams, x: ArrayLike) -> Union[int, NDArray[np.int64]]:
    """Argmax class, ties broken toward the lowest index."""
    probs = predict_proba(params, x)
    if probs.ndim == 1:
        return int(np.argmax(probs))
    return np.argmax(probs, axis=-1)
