"""Constant-curvature manifolds in the unified hyperboloid / hypersphere model.

A point of the ``d``-dimensional manifold with curvature ``kappa`` is a vector
``x`` in ``R^{d+1}`` with ``<x, x>_kappa = 1 / kappa``.  For ``kappa < 0`` the
inner product is Minkowski (first coordinate sign-flipped) and points live on
the upper sheet of the hyperboloid; for ``kappa > 0`` it is the Euclidean dot
product and points live on a sphere of radius ``|kappa|^{-1/2}``.

All functions accept arrays whose *last* axis holds the ``d+1`` coordinates, so
a batch of points is simply an ``(n, d+1)`` array.  Nothing here records
gradients; the differentiable counterparts live in :mod:`riemcl.diffgeo`.
"""

from __future__ import annotations

import math

import numpy as np

from ._kernels import _fallback

KAPPA_MIN = 1e-2
KAPPA_MAX = 1e1
TOL_MANIFOLD = 1e-8

# Below this tangent length exp/log use the series limit sin(a)/a -> 1.
SMALL_ANGLE = 1e-7
# acos_kappa arguments this far outside the legal domain are bugs, not drift.
DOMAIN_SLACK = 1e-6


class ManifoldError(ValueError):
    """Invalid input to a manifold operation."""


class NumericFault(ManifoldError):
    """An intermediate left its legal domain by more than float drift allows."""


class DegeneratePairError(ManifoldError):
    """The log map is undefined for the pair (antipodal points on a sphere)."""


def check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa == 0.0:
        raise ManifoldError(f"curvature must be finite and nonzero, got {kappa}")
    if not KAPPA_MIN <= abs(kappa) <= KAPPA_MAX:
        raise ManifoldError(
            f"|kappa|={abs(kappa):g} outside [{KAPPA_MIN:g}, {KAPPA_MAX:g}]"
        )
    return kappa


def _signature(n: int, kappa: float) -> np.ndarray:
    g = np.ones(n)
    g[0] = math.copysign(1.0, kappa)
    return g


def inner(x, y, kappa: float) -> np.ndarray | float:
    """Curvature-aware inner product ``x^T diag(sign(kappa), 1, ..., 1) y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ManifoldError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    out = np.sum(x * y * _signature(x.shape[-1], kappa), axis=-1)
    return float(out) if out.ndim == 0 else out


def tangent_norm(v, kappa: float):
    """``sqrt(|<v, v>_kappa|)``; the absolute value absorbs negative drift."""
    return np.sqrt(np.abs(inner(v, v, kappa)))


def origin(d: int, kappa: float) -> np.ndarray:
    if d < 1:
        raise ManifoldError(f"dimension must be >= 1, got {d}")
    o = np.zeros(d + 1)
    o[0] = 1.0 / math.sqrt(abs(kappa))
    return o


def _clamp_acos_arg(kappa: float, t):
    t = np.asarray(t, dtype=np.float64)
    if kappa > 0:
        if np.any(np.abs(t) > 1.0 + DOMAIN_SLACK):
            raise NumericFault(f"arccos argument out of domain: {t[np.abs(t) > 1].ravel()[:3]}")
        return np.clip(t, -1.0, 1.0)
    if np.any(t < 1.0 - DOMAIN_SLACK):
        raise NumericFault(f"arcosh argument below 1: {t[t < 1].ravel()[:3]}")
    return np.maximum(t, 1.0)


def curv_trig(kind: str, kappa: float, t):
    """Circular (``kappa > 0``) or hyperbolic (``kappa < 0``) cos / sin / acos."""
    t = np.asarray(t, dtype=np.float64)
    if kind == "cos":
        out = np.cos(t) if kappa > 0 else np.cosh(t)
    elif kind == "sin":
        out = np.sin(t) if kappa > 0 else np.sinh(t)
    elif kind == "acos":
        t = _clamp_acos_arg(kappa, t)
        out = np.arccos(t) if kappa > 0 else np.arccosh(t)
    else:
        raise ValueError(f"unknown curvature-trig kind {kind!r}")
    return float(out) if out.ndim == 0 else out


def _sinc_kappa(kappa: float, a):
    """``sin_kappa(a) / a`` with the series limit at 0."""
    a = np.asarray(a, dtype=np.float64)
    safe = np.where(a < SMALL_ANGLE, 1.0, a)
    return np.where(a < SMALL_ANGLE, 1.0, curv_trig("sin", kappa, safe) / safe)


def distance(x, y, kappa: float):
    """Geodesic distance ``acos_kappa(kappa <x, y>_kappa) / sqrt|kappa|``.

    Evaluated from the chord ``x - y`` (and ``x + y`` on the sphere), which is exact at ``x == y``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _clamp_acos_arg(kappa, kappa * np.asarray(inner(x, y, kappa)))  # domain check only
    # same value through chord lengths, which stay accurate when x and y are close
    d = _fallback.chord_distance(x, y, kappa)
    return float(d) if np.ndim(d) == 0 else d


def exp_map(x, v, kappa: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    alpha = math.sqrt(abs(kappa)) * tangent_norm(v, kappa)
    alpha = np.asarray(alpha)[..., None]
    return curv_trig("cos", kappa, alpha) * x + _sinc_kappa(kappa, alpha) * v


def log_map(x, y, kappa: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    beta = kappa * np.asarray(inner(x, y, kappa))
    theta = np.asarray(curv_trig("acos", kappa, beta))
    if kappa > 0 and np.any(np.pi - theta < 1e-7):
        raise DegeneratePairError("log map undefined for antipodal points")
    coef = 1.0 / _sinc_kappa(kappa, theta)
    return coef[..., None] * (y - beta[..., None] * x)


def exp0(v, kappa: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return exp_map(origin(v.shape[-1] - 1, kappa), v, kappa)


def log0(x, kappa: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return log_map(origin(x.shape[-1] - 1, kappa), x, kappa)


def scalar_mul(r: float, x, kappa: float) -> np.ndarray:
    """Geodesic dilation ``exp_O(r * log_O(x))``."""
    return exp0(r * log0(x, kappa), kappa)


def lift_feature(x_eucl, kappa: float) -> np.ndarray:
    """Map Euclidean features onto the manifold via ``exp_O([0 || x])``."""
    x_eucl = np.asarray(x_eucl, dtype=np.float64)
    if not np.all(np.isfinite(x_eucl)):
        raise ManifoldError("features must be finite")
    pad = np.zeros(x_eucl.shape[:-1] + (1,))
    return exp0(np.concatenate([pad, x_eucl], axis=-1), kappa)


def project_to_manifold(raw, kappa: float) -> np.ndarray:
    """Snap a drifted vector back onto the manifold.

    On the hyperboloid the first coordinate is recomputed from the spatial part;
    on the sphere the vector is radially rescaled.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if kappa < 0:
        spatial = raw[..., 1:]
        x0 = np.sqrt(1.0 / abs(kappa) + np.sum(spatial**2, axis=-1, keepdims=True))
        return np.concatenate([x0, spatial], axis=-1)
    norm = np.linalg.norm(raw, axis=-1, keepdims=True)
    if np.any(norm < 1e-15):
        raise ManifoldError("cannot project a zero vector onto the sphere")
    return raw / (norm * math.sqrt(kappa))


def manifold_residual(x, kappa: float):
    """``|<x, x>_kappa - 1/kappa|``; zero for points on the manifold."""
    return np.abs(np.asarray(inner(x, x, kappa)) - 1.0 / kappa)


def tangent_residual(v, base, kappa: float):
    return np.abs(np.asarray(inner(v, base, kappa)))


def is_on_manifold(x, kappa: float, tol: float = TOL_MANIFOLD) -> bool:
    x = np.asarray(x, dtype=np.float64)
    ok = np.all(manifold_residual(x, kappa) < tol)
    if kappa < 0:
        ok = ok and bool(np.all(x[..., 0] > 0))
    return bool(ok)


def random_tangent_at(x, kappa: float, rng: np.random.Generator, scale: float = 1.0):
    """A random tangent vector at ``x`` (Gaussian, projected to the tangent space)."""
    x = np.asarray(x, dtype=np.float64)
    u = rng.standard_normal(x.shape) * scale
    # <x, x>_kappa = 1/kappa, so subtracting kappa <u, x> x removes the normal part.
    return u - kappa * np.asarray(inner(u, x, kappa))[..., None] * x


def random_point(d: int, kappa: float, rng: np.random.Generator, scale: float = 1.0, size=None):
    shape = (d,) if size is None else (size, d)
    spatial = rng.standard_normal(shape) * scale
    return lift_feature(spatial, kappa)
