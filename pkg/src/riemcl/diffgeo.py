"""Manifold operations on :class:`~riemcl.autodiff.Tensor` batches.

These mirror :mod:`riemcl.manifold` but record onto the autodiff tape, take the
curvature itself as a (possibly trainable) scalar tensor, and work on row
batches ``(n, d+1)``.  Tangent vectors at the origin are passed around by their
spatial part only, since their first coordinate is identically zero.

Before ``arccos`` / ``arcosh`` the argument is clamped to an open window
(``1e-12`` inside the legal domain) so gradients stay finite.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .manifold import SMALL_ANGLE, ManifoldError

ACOS_WINDOW = 1e-12
EPS_AGG = 1e-12


class AggregationDegenerate(ManifoldError):
    pass


class Curv:
    """A curvature tensor with its sign and ``sqrt|kappa|`` precomputed."""

    __slots__ = ("k", "sign", "root")

    def __init__(self, kappa):
        self.k = ad.as_tensor(kappa)
        value = float(self.k.value)
        if value == 0.0:
            raise ManifoldError("curvature must be nonzero")
        self.sign = 1.0 if value > 0 else -1.0
        self.root = ad.sqrt(self.sign * self.k)

    @property
    def value(self) -> float:
        return float(self.k.value)


def as_curv(kappa) -> Curv:
    return kappa if isinstance(kappa, Curv) else Curv(kappa)


def signature(dim: int, c: Curv) -> np.ndarray:
    g = np.ones(dim)
    g[0] = c.sign
    return g


def cos_k(c: Curv, t):
    return ad.cos(t) if c.sign > 0 else ad.cosh(t)


def sin_k(c: Curv, t):
    return ad.sin(t) if c.sign > 0 else ad.sinh(t)


def acos_k(c: Curv, t):
    if c.sign > 0:
        return ad.arccos(ad.clamp(t, -1.0 + ACOS_WINDOW, 1.0 - ACOS_WINDOW))
    return ad.arcosh(ad.clamp(t, lo=1.0 + ACOS_WINDOW))


def inner_rows(x, y, c: Curv):
    """Row-wise ``<x_r, y_r>_kappa`` for two ``(n, d+1)`` batches."""
    return (x * y * signature(x.shape[-1], c)).sum(axis=-1)


def inner_pairs(x, y, c: Curv):
    """``(n, m)`` matrix of ``<x_a, y_b>_kappa``."""
    return (x * signature(x.shape[-1], c)) @ y.T


def _safe_norm(sq):
    """``sqrt(sq)`` with the zero rows routed away from the infinite derivative."""
    small = sq.value < SMALL_ANGLE**2
    return ad.sqrt(ad.where(small, 1.0, sq)), small


def exp0(v_s, c: Curv):
    """``exp_O([0 || v_s])`` for a batch of spatial tangent parts ``(n, d)``."""
    c = as_curv(c)
    norm, tiny = _safe_norm((v_s * v_s).sum(axis=-1, keepdims=True))
    alpha = c.root * norm
    small = tiny | (alpha.value < SMALL_ANGLE)
    safe_alpha = ad.where(small, 1.0, alpha)
    time = ad.where(small, 1.0, cos_k(c, safe_alpha)) / c.root
    ratio = ad.where(small, 1.0, sin_k(c, safe_alpha) / safe_alpha)
    return ad.concat([time, ratio * v_s], axis=-1)


def log0(x, c: Curv):
    """Spatial part of ``log_O(x)`` for a batch of points ``(n, d+1)``."""
    c = as_curv(c)
    beta = c.root * x[:, 0:1]
    theta = acos_k(c, beta)
    small = theta.value < SMALL_ANGLE
    safe = ad.where(small, 1.0, theta)
    coef = ad.where(small, 1.0, safe / sin_k(c, safe))
    return coef * x[:, 1:]


def lift(features, c: Curv):
    """Euclidean features onto the manifold: ``exp_O([0 || x])``."""
    return exp0(ad.as_tensor(features), c)


def pairwise_distance(x, y, c: Curv):
    c = as_curv(c)
    return acos_k(c, c.k * inner_pairs(x, y, c)) / c.root


def rowwise_distance(x, y, c: Curv):
    c = as_curv(c)
    return acos_k(c, c.k * inner_rows(x, y, c)) / c.root


def aggregate(points, weights, c: Curv):
    """Weighted closed-form centroid ``u / (sqrt|kappa| * |u|_kappa)`` with ``u = weights @ points``."""
    c = as_curv(c)
    u = ad.as_tensor(weights) @ ad.as_tensor(points)
    uu = inner_rows(u, u, c)
    if np.any(np.abs(uu.value) <= EPS_AGG):
        raise AggregationDegenerate("weighted sum has (near) zero curvature-aware norm")
    if c.sign < 0:
        # upper sheet: flip rows whose time coordinate came out negative
        flip = np.where(u.value[:, 0] < 0, -1.0, 1.0)[:, None]
        u = u * flip
    norm = ad.sqrt(ad.absolute(uu)).reshape(-1, 1)
    return u / (c.root * norm)


def apply_fn(fn, x, c: Curv):
    """``exp_O([0 || fn(log_O(x)_spatial)])``."""
    return exp0(fn(log0(x, c)), c)


def kappa_left_mul(w, x, c: Curv):
    """Feature transform ``exp_O([0 || W log_O(x)_spatial])`` for a batch; ``w`` is ``(d_out, d_in)``."""
    return exp0(log0(x, c) @ ad.as_tensor(w).T, c)


def residual(x, kappa: float) -> np.ndarray:
    """Manifold residual of a tensor batch, for checks."""
    val = x.value if isinstance(x, ad.Tensor) else np.asarray(x)
    g = np.ones(val.shape[-1])
    g[0] = 1.0 if kappa > 0 else -1.0
    return np.abs(np.sum(val * val * g, axis=-1) - 1.0 / kappa)
