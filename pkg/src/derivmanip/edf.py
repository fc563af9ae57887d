"""Emphasis density functions and the derivative-manipulated logit gradient.

A weighting function w(p) maps the labelled-class probability p in [0, 1] to
an example weight. Dividing by its integral over [0, 1] gives the emphasis
density h(p) = w(p) / Z. The synthesized logit gradient keeps the direction of
the cross-entropy gradient and has L1 norm exactly h(p_y).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core_math
from .core_math import LossKind
from .errors import InvalidInputError, QuadratureError

FAMILY_TAGS = ("ND", "ED", "BD", "Unified", "FromLoss")
DEFAULT_QUAD_POINTS = 10001
BD_ENDPOINT_EPS = 1e-9
OFF_TARGET_EPS = 1e-12

# parameter names per family, in positional order
FAMILY_PARAMS = {
    "ND": ("psi", "beta"),
    "ED": ("beta",),
    "BD": ("alpha", "eta"),
    "Unified": ("lambda", "beta"),
}


@dataclass(frozen=True)
class EdfFamily:
    tag: str
    params: tuple = ()
    loss: Optional[LossKind] = None

    def __post_init__(self):
        if self.tag not in FAMILY_TAGS:
            raise InvalidInputError(f"unknown EDF family {self.tag!r}")
        if self.tag == "FromLoss":
            if self.loss is None:
                raise InvalidInputError("FromLoss needs a loss kind")
            return
        names = FAMILY_PARAMS[self.tag]
        if len(self.params) != len(names):
            raise InvalidInputError(f"{self.tag} expects parameters {names}")
        if not all(math.isfinite(v) for v in self.params):
            raise InvalidInputError(f"{self.tag} parameters must be finite")
        p = dict(zip(names, self.params))
        for name in ("psi", "alpha", "eta", "lambda"):
            if name in p and p[name] < 0:
                raise InvalidInputError(f"{self.tag}: {name} must be >= 0, got {p[name]}")

    def param(self, name: str) -> float:
        return dict(zip(FAMILY_PARAMS[self.tag], self.params))[name]

    def describe(self) -> str:
        if self.tag == "FromLoss":
            return f"FromLoss({self.loss})"
        args = ", ".join(f"{k}={v:g}" for k, v in zip(FAMILY_PARAMS[self.tag], self.params))
        return f"{self.tag}({args})"


def nd(psi: float, beta: float) -> EdfFamily:
    return EdfFamily("ND", (float(psi), float(beta)))


def ed(beta: float) -> EdfFamily:
    return EdfFamily("ED", (float(beta),))


def bd(alpha: float, eta: float) -> EdfFamily:
    return EdfFamily("BD", (float(alpha), float(eta)))


def unified(lam: float, beta: float) -> EdfFamily:
    return EdfFamily("Unified", (float(lam), float(beta)))


def from_loss(kind: LossKind) -> EdfFamily:
    return EdfFamily("FromLoss", loss=kind)


def edf_raw(family: EdfFamily, p, return_clamped: bool = False):
    """Unnormalized weight w(p).

    BD with alpha < 1 or eta < 1 is singular at an endpoint; p is clamped
    into [1e-9, 1 - 1e-9] there and, with ``return_clamped``, a boolean mask
    of the clamped samples is returned alongside the weights.
    """
    p = np.asarray(p, dtype=np.float64)
    clamped = np.zeros(p.shape, dtype=bool)
    tag = family.tag
    if tag == "ND":
        psi, beta = family.params
        w = np.exp(-beta * p * (p - 2.0 * psi))
    elif tag == "ED":
        (beta,) = family.params
        w = np.exp(beta * (1.0 - p))
    elif tag == "Unified":
        lam, beta = family.params
        w = np.exp(beta * p**lam * (1.0 - p))
    elif tag == "BD":
        alpha, eta = family.params
        lo = BD_ENDPOINT_EPS if alpha < 1 else 0.0
        hi = 1.0 - BD_ENDPOINT_EPS if eta < 1 else 1.0
        pc = np.clip(p, lo, hi)
        clamped = pc != p
        w = pc ** (alpha - 1.0) * (1.0 - pc) ** (eta - 1.0)
    else:
        w = core_math.weight_magnitude(family.loss, p)
    if return_clamped:
        return w, clamped
    return w


def simpson(values: np.ndarray, a: float = 0.0, b: float = 1.0) -> float:
    """Composite Simpson rule over equally spaced samples (odd count)."""
    n = len(values)
    if n < 3 or n % 2 == 0:
        raise InvalidInputError(f"Simpson needs an odd sample count >= 3, got {n}")
    step = (b - a) / (n - 1)
    total = values[0] + values[-1] + 4.0 * values[1:-1:2].sum() + 2.0 * values[2:-1:2].sum()
    return float(total * step / 3.0)


def _smoothstep_grid(n_points: int):
    # p = t^3 (10 - 15 t + 6 t^2); dp/dt vanishes to second order at both
    # ends, which tames p^q-type endpoint singularities for Simpson.
    t = np.linspace(0.0, 1.0, n_points)
    p = t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    dp = 30.0 * t * t * (1.0 - t) ** 2
    return p, dp


def normalizer(family: EdfFamily, n_points: int = DEFAULT_QUAD_POINTS) -> float:
    """Z = integral of w(p) over [0, 1].

    Composite Simpson with ``n_points`` samples, taken in a smoothstep
    variable so that families with a non-smooth endpoint (GCE with small q,
    BD with alpha or eta below 2) still integrate to near machine precision.
    """
    if n_points < 101 or n_points % 2 == 0:
        raise InvalidInputError(f"n_points must be odd and >= 101, got {n_points}")
    grid, jac = _smoothstep_grid(n_points)
    with np.errstate(over="ignore", invalid="ignore"):
        values = edf_raw(family, grid)
    bad = ~np.isfinite(values)
    if bad.any():
        at = grid[np.argmax(bad)]
        raise QuadratureError(f"{family.describe()} is not finite at p={at!r}")
    z = simpson(values * jac)
    if not (z > 0 and math.isfinite(z)):
        raise QuadratureError(f"{family.describe()} has non-positive integral {z!r}")
    return z


@dataclass(frozen=True)
class Edf:
    """A weighting family together with its frozen normalizing constant."""

    family: EdfFamily
    Z: float
    grid_resolution: int = DEFAULT_QUAD_POINTS

    def raw(self, p):
        return edf_raw(self.family, p)

    def __call__(self, p):
        return edf_normalized(self, p)


def make_edf(family: EdfFamily, n_points: int = DEFAULT_QUAD_POINTS) -> Edf:
    return Edf(family, normalizer(family, n_points), n_points)


def edf_normalized(edf: Edf, p) -> np.ndarray:
    return edf_raw(edf.family, p) / edf.Z


def emphasis_mode_analytic(lam: float) -> float:
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    return lam / (lam + 1.0)


def emphasis_mode_numeric(family: EdfFamily, grid: int = 10001) -> float:
    """Grid argmax of w(p); ties go to the smallest p."""
    if grid < 1001:
        raise InvalidInputError(f"grid must be >= 1001, got {grid}")
    ps = np.linspace(0.0, 1.0, grid)
    return float(ps[np.argmax(edf_raw(family, ps))])


def emphasis_variance(weights) -> float:
    """Population variance of a batch of example weights."""
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size == 0:
        raise InvalidInputError("emphasis variance of an empty batch")
    return float(np.var(w))


def dm_grad_logits(probs, y, edf: Edf, return_saturated: bool = False):
    """Logit gradient with CCE's direction and L1 norm h(p_y).

    The target component is -h/2. The remaining h/2 is spread over the other
    classes in proportion to the renormalized non-target distribution
    p_j / sum_{k != y} p_k, which stays finite as p_y -> 1. When the
    non-target mass is below 1e-12 it is spread uniformly instead; those rows
    are reported by ``return_saturated``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    single = probs.ndim == 1
    P = np.atleast_2d(probs)
    py = np.atleast_1d(core_math.target_prob(probs, y))
    Y = np.atleast_1d(np.asarray(y))
    rows = np.arange(len(Y))
    C = P.shape[1]

    h = edf_normalized(edf, py)
    off = P.copy()
    off[rows, Y] = 0.0
    mass = off.sum(axis=1)
    saturated = mass < OFF_TARGET_EPS
    share = np.empty_like(off)
    ok = ~saturated
    share[ok] = off[ok] / mass[ok, None]
    share[saturated] = 1.0 / (C - 1)
    share[rows, Y] = -1.0
    g = 0.5 * h[:, None] * share
    if single:
        g, saturated = g[0], bool(saturated[0])
    if return_saturated:
        return g, saturated
    return g


def dn_scale(kind: LossKind, n_points: int = DEFAULT_QUAD_POINTS) -> float:
    """1/Z for a loss's own weighting function."""
    return 1.0 / normalizer(from_loss(kind), n_points)


def export_curve(edf: Edf, n_points: int, path) -> None:
    """Write ``p,raw_weight,normalized_weight`` rows at uniform p."""
    if n_points < 2:
        raise InvalidInputError("need at least two sample points")
    ps = np.linspace(0.0, 1.0, n_points)
    raw = edf.raw(ps)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "raw_weight", "normalized_weight"])
        for p, r in zip(ps, raw):
            writer.writerow([repr(float(p)), repr(float(r)), repr(float(r / edf.Z))])
