"""Feedforward classifier with explicit forward cache and manual backprop.

The backward pass takes the gradient with respect to the logits as an input,
so any synthesized logit gradient (a loss derivative or a derivative-
manipulated one) can be pushed through the network unchanged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core_math import softmax
from .errors import ConfigError, ParseError, ShapeError

ACTIVATIONS = ("relu", "tanh")
CHECKPOINT_MAGIC = b"DMF1"


@dataclass
class Mlp:
    layer_dims: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = "relu"
    dropout_rate: float = 0.0

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def params(self) -> List[np.ndarray]:
        """Parameters in layer order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_dims),
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.dropout_rate,
        )


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: List[np.ndarray] = field(default_factory=list)
    activations: List[np.ndarray] = field(default_factory=list)
    masks: List[Optional[np.ndarray]] = field(default_factory=list)
    logits: Optional[np.ndarray] = None
    probs: Optional[np.ndarray] = None
    train_mode: bool = False


def _check_config(layer_dims, activation, dropout_rate):
    if len(layer_dims) < 2 or any(int(d) <= 0 for d in layer_dims):
        raise ConfigError(f"layer dims must be >= 2 positive integers, got {layer_dims}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {dropout_rate}")


def init_mlp(layer_dims, activation="relu", dropout_rate=0.0, seed=0) -> Mlp:
    """Glorot-uniform weights, zero biases, all drawn from ``seed``.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.
    """
    layer_dims = [int(d) for d in layer_dims]
    _check_config(layer_dims, activation, dropout_rate)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(layer_dims, weights, biases, activation, float(dropout_rate))


def _act(name, x):
    return np.maximum(x, 0.0) if name == "relu" else np.tanh(x)


def _act_grad(name, pre, post):
    return (pre > 0.0).astype(pre.dtype) if name == "relu" else 1.0 - post * post


def forward(net: Mlp, batch, train_mode: bool = False, rng=None) -> ForwardCache:
    """Run the network on a (N, D) batch.

    In train mode hidden activations go through inverted dropout whose masks
    are drawn from ``rng`` (a ``numpy.random.Generator``).
    """
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.layer_dims[0]:
        raise ShapeError(f"expected (N, {net.layer_dims[0]}) features, got {X.shape}")
    use_dropout = train_mode and net.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ConfigError("train-mode dropout needs a random generator")
    cache = ForwardCache(inputs=X, train_mode=train_mode)
    a = X
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W + b
        if i == last:
            cache.logits = z
            break
        h = _act(net.activation, z)
        cache.pre_activations.append(z)
        mask = None
        if use_dropout:
            keep = 1.0 - net.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            a = h * mask
        else:
            a = h
        cache.masks.append(mask if train_mode else None)
        cache.activations.append(h)
    cache.probs = softmax(cache.logits)
    return cache


def backward(net: Mlp, cache: ForwardCache, logit_grads) -> List[np.ndarray]:
    """Parameter gradients given dObjective/dlogits, averaged over the batch.

    Returns gradients in the same order as ``Mlp.params()``.
    """
    G = np.asarray(logit_grads, dtype=np.float64)
    if G.shape != cache.logits.shape:
        raise ShapeError(f"logit gradients {G.shape} do not match logits {cache.logits.shape}")
    n = G.shape[0]
    delta = G / n
    grads: List[np.ndarray] = []
    for i in range(len(net.weights) - 1, -1, -1):
        if i == 0:
            a_in = cache.inputs
        else:
            h = cache.activations[i - 1]
            mask = cache.masks[i - 1]
            a_in = h if mask is None else h * mask
        grads.append(delta.sum(axis=0))
        grads.append(a_in.T @ delta)
        if i > 0:
            da = delta @ net.weights[i].T
            if mask is not None:
                da = da * mask
            delta = da * _act_grad(net.activation, cache.pre_activations[i - 1], cache.activations[i - 1])
    grads.reverse()
    return grads


def predict(net: Mlp, features):
    """Eval-mode class predictions (ties go to the lowest index) and probs."""
    cache = forward(net, features, train_mode=False)
    return np.argmax(cache.logits, axis=1), cache.probs


def save_checkpoint(net: Mlp, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(net.weights)))
        fh.write(struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims))
        for p in net.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path, activation="relu", dropout_rate=0.0) -> Mlp:
    """Read a DMF1 file. Activation and dropout are not stored in it."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a DMF1 checkpoint")
    (n_layers,) = struct.unpack_from("<I", data, 4)
    off = 8
    dims = list(struct.unpack_from(f"<{n_layers + 1}I", data, off))
    off += 4 * (n_layers + 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=off)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        weights.append(W.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(data):
        raise ParseError(f"{path}: {len(data) - off} trailing bytes")
    _check_config(dims, activation, dropout_rate)
    return Mlp(dims, weights, biases, activation, float(dropout_rate))
