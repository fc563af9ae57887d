"""Softmax, the four reference losses, and their closed-form logit gradients.

Every loss studied here depends on the logits only through p_y, the softmax
probability of the labelled class. Their logit gradients therefore all point
along the cross-entropy gradient and differ only in magnitude:

    dL/dz = s(p_y) * (p - onehot(y))

with s = 1 (CCE), p_y (MAE), 2 p_y (1 - p_y) (MSE) and p_y^q (GCE).

Functions accept a single example (probs of shape (C,), integer y) or a batch
(probs of shape (N, C), y of shape (N,)) and return arrays of matching shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError

LOG_EPS = 1e-12
DEFAULT_GCE_Q = 0.7

LOSS_TAGS = ("CCE", "MAE", "MSE", "GCE")


@dataclass(frozen=True)
class LossKind:
    tag: str
    q: Optional[float] = None

    def __post_init__(self):
        if self.tag not in LOSS_TAGS:
            raise InvalidInputError(f"unknown loss {self.tag!r}")
        if self.tag == "GCE":
            if self.q is None or not 0.0 <= self.q <= 1.0:
                raise InvalidInputError(f"GCE needs q in [0, 1], got {self.q}")
        elif self.q is not None:
            raise InvalidInputError(f"{self.tag} takes no q")

    def __str__(self):
        return f"GCE(q={self.q:g})" if self.tag == "GCE" else self.tag


CCE = LossKind("CCE")
MAE = LossKind("MAE")
MSE = LossKind("MSE")


def gce(q: float = DEFAULT_GCE_Q) -> LossKind:
    return LossKind("GCE", float(q))


def loss_from_name(name: str, q: Optional[float] = None) -> LossKind:
    name = name.upper()
    if name == "GCE":
        return gce(DEFAULT_GCE_Q if q is None else q)
    return LossKind(name)


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] < 2:
        raise InvalidInputError("softmax needs at least two classes")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("softmax input contains non-finite values")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(probs: np.ndarray, y):
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidInputError("class index must be an integer")
    C = probs.shape[-1]
    if np.any(y < 0) or np.any(y >= C):
        raise IndexError(f"class index out of range for C={C}: {y}")
    if probs.ndim == 1:
        if y.ndim != 0:
            raise InvalidInputError("single example expects a scalar label")
    elif y.shape != probs.shape[:1]:
        raise InvalidInputError(f"labels shape {y.shape} does not match batch {probs.shape[:1]}")
    return y


def target_prob(probs, y) -> np.ndarray:
    """p_y for one example or for each row of a batch."""
    probs = np.asarray(probs, dtype=np.float64)
    y = _check_labels(probs, y)
    if probs.ndim == 1:
        return probs[y]
    return probs[np.arange(len(y)), y]


def _onehot_like(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(probs)
    if probs.ndim == 1:
        out[y] = 1.0
    else:
        out[np.arange(len(y)), y] = 1.0
    return out


def softmax_grad_target(probs, y) -> np.ndarray:
    """Gradient of p_y with respect to the logits: p_y (onehot(y) - p)."""
    probs = np.asarray(probs, dtype=np.float64)
    y = _check_labels(probs, y)
    py = target_prob(probs, y)
    return np.expand_dims(py, -1) * (_onehot_like(probs, y) - probs)


def loss_value(kind: LossKind, p_target) -> np.ndarray:
    p = np.asarray(p_target, dtype=np.float64)
    if kind.tag == "CCE":
        return -np.log(np.maximum(p, LOG_EPS))
    if kind.tag == "MAE":
        return 1.0 - p
    if kind.tag == "MSE":
        return (1.0 - p) ** 2
    if kind.q == 0.0:
        return -np.log(np.maximum(p, LOG_EPS))
    return (1.0 - p**kind.q) / kind.q


def direction_scale(kind: LossKind, p_target) -> np.ndarray:
    """Factor that turns the CCE logit gradient into this loss's gradient."""
    p = np.asarray(p_target, dtype=np.float64)
    if kind.tag == "CCE":
        return np.ones_like(p)
    if kind.tag == "MAE":
        return p
    if kind.tag == "MSE":
        return 2.0 * p * (1.0 - p)
    return p**kind.q


def grad_logits(kind: LossKind, probs, y) -> np.ndarray:
    """Closed-form dL/dz for one of the reference losses."""
    probs = np.asarray(probs, dtype=np.float64)
    y = _check_labels(probs, y)
    py = target_prob(probs, y)
    cce = probs - _onehot_like(probs, y)
    return np.expand_dims(direction_scale(kind, py), -1) * cce


def weight_magnitude(kind: LossKind, p_target) -> np.ndarray:
    """L1 norm of the logit gradient as a function of p_y alone."""
    p = np.asarray(p_target, dtype=np.float64)
    if kind.tag == "CCE":
        return 2.0 * (1.0 - p)
    if kind.tag == "MAE":
        return 2.0 * p * (1.0 - p)
    if kind.tag == "MSE":
        return 4.0 * p * (1.0 - p) ** 2
    return 2.0 * p**kind.q * (1.0 - p)


def emphasis_mode(kind: LossKind) -> float:
    """Closed-form argmax of weight_magnitude over p in [0, 1]."""
    return {"CCE": 0.0, "MAE": 0.5, "MSE": 1.0 / 3.0}.get(
        kind.tag, (kind.q or 0.0) / ((kind.q or 0.0) + 1.0)
    )
