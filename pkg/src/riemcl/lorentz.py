"""Generalized Lorentz projection between manifolds of different dimension and curvature.

The projection keeps a learnable linear map ``W`` on the spatial coordinates and
forces the time coordinate so the image lands on the target manifold:
``y = (w0 * x0, W x_s + b)`` with

    w0 = sqrt( |k1|/|k2| * (1 - k2 * |W x_s + b|^2) / (1 - k1 * <x_s, x_s>) )

For a source point on its manifold, ``1 - k1 <x_s, x_s> = |k1| x0^2``, so
``w0 * x0 = sign(x0) * sqrt((1 - k2 |y_s|^2) / |k2|)``; the differentiable path
uses that form because it stays finite when ``x0`` is near zero on a sphere.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from . import autodiff as ad
from . import diffgeo as dg
from .manifold import ManifoldError, distance

log = logging.getLogger(__name__)

FEASIBILITY_MARGIN = 1e-9


class ProjectionInfeasible(ManifoldError):
    """The spatial image is too long to fit on the target sphere."""


def glp_time_scale(x, w, kappa1: float, kappa2: float, b=None) -> np.ndarray:
    """The time-coordinate factor ``w0`` exactly as defined (no simplification)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xs = x[:, 1:]
    ys = xs @ np.asarray(w).T + (0.0 if b is None else np.asarray(b))
    ell = np.sum(ys * ys, axis=-1)
    num = 1.0 - kappa2 * ell
    den = 1.0 - kappa1 * np.sum(xs * xs, axis=-1)
    return np.sqrt(abs(kappa1) / abs(kappa2) * num / den)


def _spatial_image(xs, w, b, c2: dg.Curv, mode: str):
    ys = xs @ w.T
    if b is not None:
        ys = ys + b
    kappa2 = c2.value
    if kappa2 <= 0:
        return ys
    ell = (ys * ys).sum(axis=-1, keepdims=True)
    limit = (1.0 - FEASIBILITY_MARGIN) / c2.k  # keeps the dependence on a trainable curvature
    bad = ell.value > 1.0 / kappa2
    if np.any(bad):
        if mode == "strict":
            raise ProjectionInfeasible(
                f"{int(bad.sum())} point(s) map outside the target sphere (max |y_s|^2 = {ell.value.max():.6g},"
                f" limit {1.0 / kappa2:.6g})"
            )
        if mode != "lenient":
            raise ValueError(f"unknown feasibility mode {mode!r}")
        log.debug("rescaling %d infeasible projection(s) to the sphere boundary", int(bad.sum()))
        scale = ad.sqrt(limit / ad.where(bad, ell, limit * np.ones_like(ell.value)))
        ys = ys * scale
    return ys


def lorentz_forward(x, w, b, kappa2, mode: str = "strict"):
    """Differentiable Lorentz layer on a batch ``(n, d1+1)`` -> ``(n, d2+1)``.

    ``kappa2`` may be a trainable curvature tensor; the source curvature only
    enters through the sign of ``x0``.
    """
    c2 = dg.as_curv(kappa2)
    x = ad.as_tensor(x)
    ys = _spatial_image(x[:, 1:], ad.as_tensor(w), None if b is None else ad.as_tensor(b), c2, mode)
    ell = (ys * ys).sum(axis=-1, keepdims=True)
    radicand = (1.0 - c2.k * ell) / (c2.sign * c2.k)
    if c2.sign > 0:
        radicand = ad.clamp(radicand, lo=0.0)
        sheet = np.where(x.value[:, 0:1] < 0, -1.0, 1.0)
    else:
        # hyperbolic targets always use the upper sheet
        sheet = 1.0
    y0 = sheet * ad.sqrt(radicand)
    return ad.concat([y0, ys], axis=-1)


def glp_apply(x, w, kappa1: float, kappa2: float, mode: str = "strict") -> np.ndarray:
    """Project ``x`` from ``M(d1, kappa1)`` to ``M(d2, kappa2)`` with spatial map ``w``."""
    return lorentz_layer(x, w, None, kappa1, kappa2, mode)


def lorentz_layer(x, w, b, kappa1: float, kappa2: float, mode: str = "strict") -> np.ndarray:
    """``(w0 * x0, W x_s + b)`` on the target manifold, for one point or a batch.

    ``kappa1`` is accepted for symmetry with the definition; on-manifold inputs
    make ``w0 * x0`` independent of it (see the module docstring).
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    x2 = np.atleast_2d(x)
    if w.shape[1] != x2.shape[1] - 1:
        raise ValueError(f"W has {w.shape[1]} columns, point has {x2.shape[1] - 1} spatial coordinates")
    out = lorentz_forward(x2, w, b, kappa2, mode).value
    return out.reshape(x.shape[:-1] + (out.shape[1],))


def lorentz_similarity(x, y, params: dict, kappa1: float, kappa2: float, mode: str = "strict") -> float:
    """Negated geodesic distance between the projected ``x`` and ``y`` (0 is the maximum)."""
    px = lorentz_layer(x, params["W"], params.get("b"), kappa1, kappa2, mode)
    d = distance(px, np.asarray(y, dtype=np.float64), kappa2)
    return -d if np.ndim(d) else -float(d)


def tangent_forward(x, w, b, kappa1, kappa2):
    """Tangent-space stand-in for the Lorentz layer: ``exp_O^{k2}(W log_O^{k1}(x) + b)``."""
    v = dg.log0(ad.as_tensor(x), dg.as_curv(kappa1)) @ ad.as_tensor(w).T
    if b is not None:
        v = v + b
    return dg.exp0(v, dg.as_curv(kappa2))


def init_lorentz(d1: int, d2: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Orthogonal-ish ``W`` (orthonormal rows when ``d2 <= d1``) and zero bias."""
    q, _ = np.linalg.qr(rng.standard_normal((max(d1, d2), max(d1, d2))))
    return {"W": q[:d2, :d1].copy(), "b": np.zeros(d2)}


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """A uniformly random special-orthogonal ``d x d`` matrix."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def max_feasible_norm(kappa2: float) -> float:
    return math.inf if kappa2 < 0 else 1.0 / math.sqrt(kappa2)
