"""Graph convolution on a constant-curvature manifold.

One layer: transform every node with ``W (x) h`` (log at the origin, linear map,
exp back), score neighbors with a tangent-space attention, take the weighted
closed-form centroid over the closed neighborhood, then apply the nonlinearity
in the tangent space at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import diffgeo as dg
from .autodiff import LEAKY_SLOPE
from .graphstore import Graph


@dataclass
class EncoderConfig:
    layer_dims: list[int] = field(default_factory=lambda: [8, 16, 16])
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.layer_dims) < 3:
            raise ValueError("encoder needs an input dim and at least two layers")
        if min(self.layer_dims) < 2:
            raise ValueError("all layer dims must be >= 2")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def low_dim(self) -> int:
        return self.layer_dims[1]

    @property
    def high_dim(self) -> int:
        return self.layer_dims[-1]


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    for l, (d_in, d_out) in enumerate(zip(cfg.layer_dims[:-1], cfg.layer_dims[1:])):
        bound = 1.0 / math.sqrt(d_in)
        params[f"W{l}"] = rng.uniform(-bound, bound, size=(d_out, d_in))
        params[f"theta{l}"] = np.zeros(2 * (d_out + 1))
    return params


def neighborhood_mask(g: Graph) -> np.ndarray:
    """Closed neighborhoods: adjacency plus self loops, as a boolean matrix."""
    return (g.adjacency() + np.eye(g.n_nodes)) > 0


def attention_logits(x, theta, c):
    """``logits[i, j] = theta^T [log_O(x_i) || log_O(x_j)]`` for all pairs."""
    theta = ad.as_tensor(theta)
    half = theta.shape[0] // 2
    t = dg.log0(x, c)
    # log_O has a zero first coordinate, so theta's time entries multiply zeros
    pad = np.zeros((t.shape[0], 1))
    full = ad.concat([pad, t], axis=-1)
    a = full @ theta[:half]
    b = full @ theta[half:]
    return a.reshape(-1, 1) + b.reshape(1, -1)


def layer_forward(mask: np.ndarray, h, params: dict, l: int, c, slope: float = LEAKY_SLOPE):
    """One convolution; ``mask`` is the closed-neighborhood matrix, ``h`` the input points."""
    c = dg.as_curv(c)
    w = ad.as_tensor(params[f"W{l}"])
    theta = ad.as_tensor(params[f"theta{l}"])
    if theta.shape[0] != 2 * (w.shape[0] + 1):
        raise ValueError(f"theta{l} must have length {2 * (w.shape[0] + 1)}")
    x = dg.kappa_left_mul(w, h, c)
    nu = ad.softmax(attention_logits(x, theta, c), axis=1, mask=mask)
    agg = dg.aggregate(x, nu, c)
    return dg.apply_fn(lambda t: ad.leaky_relu(t, slope), agg, c)


def encode(g: Graph | np.ndarray, features, params: dict, kappa, cfg: EncoderConfig):
    """Run all layers; returns ``(low_view, high_view)`` as point batches.

    ``g`` may be a Graph or a precomputed closed-neighborhood mask.
    """
    mask = neighborhood_mask(g) if isinstance(g, Graph) else g
    c = dg.as_curv(kappa)
    h = dg.lift(features, c)
    low = None
    for l in range(cfg.n_layers):
        h = layer_forward(mask, h, params, l, c, cfg.slope)
        if l == 0:
            low = h
    return low, h


# numpy-facing wrappers for single points and small sets


def _val(t):
    return t.value if isinstance(t, ad.Tensor) else np.asarray(t)


def kappa_left_mul(w, h, kappa: float) -> np.ndarray:
    return _val(dg.kappa_left_mul(w, np.atleast_2d(h), kappa)).reshape(
        np.shape(h)[:-1] + (np.shape(w)[0] + 1,)
    )


def apply_fn(fn, h, kappa: float) -> np.ndarray:
    h2 = np.atleast_2d(h)
    return _val(dg.apply_fn(lambda t: ad.as_tensor(fn(t.value)), h2, kappa)).reshape(np.shape(h))


def attention_logit(x_i, x_j, theta, kappa: float) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[0] != 2 * len(x_i) or len(x_i) != len(x_j):
        raise ValueError("theta must have length 2(d+1) matching both points")
    pts = np.stack([x_i, x_j])
    return float(_val(attention_logits(pts, theta, kappa))[0, 1])


def attention_weights(logits) -> np.ndarray:
    """Softmax over a closed neighborhood's logits (self included)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("empty neighborhood")
    return _val(ad.softmax(logits, axis=-1))


def aggregate(points, weights, kappa: float) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64).reshape(1, -1)
    if np.any(weights <= 0):
        raise ValueError("aggregation weights must be positive")
    return _val(dg.aggregate(points, weights, kappa))[0]
