"""Graph curvature: the combinatorial Forman oracle and the learned CurvNet estimator."""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from . import autodiff as ad
from .graphstore import Graph, degree_features
from .manifold import KAPPA_MAX, KAPPA_MIN

DEFAULT_KAPPA_SCALE = 2.0
N_DEGREE_FEATURES = 4


class DegenerateEdgeError(ValueError):
    pass


def node_weights(g: Graph) -> np.ndarray:
    """``w_i`` = sum of the degrees of ``i``'s neighbors (0 for isolated nodes)."""
    deg = g.degrees().astype(np.float64)
    w = np.zeros(g.n_nodes)
    if g.n_edges:
        np.add.at(w, g.edges[:, 0], deg[g.edges[:, 1]])
        np.add.at(w, g.edges[:, 1], deg[g.edges[:, 0]])
    return w


def edge_weight_gamma(w_i: float, w_j: float) -> float:
    if w_i == 0 and w_j == 0:
        raise DegenerateEdgeError("edge weight undefined when both node weights are zero")
    return w_i / math.hypot(w_i, w_j)


def forman_edge_curvature(g: Graph, edge, w: np.ndarray | None = None) -> float:
    """Forman curvature of the (oriented) edge ``(i, j)``; endpoints excluded from the sums."""
    i, j = int(edge[0]), int(edge[1])
    nbrs = g.neighbors()
    if j not in nbrs[i]:
        raise ValueError(f"({i}, {j}) is not an edge")
    w = node_weights(g) if w is None else w
    g_ij = edge_weight_gamma(w[i], w[j])
    s_i = sum(math.sqrt(g_ij / edge_weight_gamma(w[i], w[l])) * w[l] for l in nbrs[i] if l != j)
    s_j = sum(math.sqrt(g_ij / edge_weight_gamma(w[i], w[k])) * w[k] for k in nbrs[j] if k != i)
    return float(w[i] + w[j] - s_i - s_j)


def forman_directed(g: Graph, backend=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All oriented edge curvatures in CSR order: ``(indptr, indices, F)``."""
    indptr, indices = g.csr()
    return indptr, indices, _kernels.forman_directed(indptr, indices, node_weights(g), backend=backend)


def forman_node_curvature(g: Graph, backend=None) -> np.ndarray:
    """Mean of ``F_ij`` over each node's edges; NaN for isolated nodes."""
    indptr, _, f = forman_directed(g, backend=backend)
    counts = np.diff(indptr)
    sums = np.bincount(np.repeat(np.arange(g.n_nodes), counts), weights=f, minlength=g.n_nodes)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def forman_graph_curvature(g: Graph, backend=None) -> float:
    if g.n_edges == 0:
        raise ValueError("Forman curvature needs at least one edge")
    node = forman_node_curvature(g, backend=backend)
    return float(np.nanmean(node))


def oracle_kappa(g: Graph, kappa_scale: float = DEFAULT_KAPPA_SCALE) -> float:
    """A legal manifold curvature derived from the Forman value.

    The raw value scales with node weights, so it is divided by the mean node
    weight before the same squashing CurvNet uses.
    """
    w = node_weights(g)
    scale = float(np.mean(w[w > 0])) if np.any(w > 0) else 1.0
    return squash_kappa(forman_graph_curvature(g) / scale, kappa_scale)


def squash_kappa(raw: float, kappa_scale: float = DEFAULT_KAPPA_SCALE) -> float:
    k = kappa_scale * math.tanh(raw)
    if abs(k) < KAPPA_MIN:
        k = math.copysign(KAPPA_MIN, k) if k != 0 else KAPPA_MIN
    return k


def normalized_adjacency(g: Graph) -> np.ndarray:
    """``D^{-1/2} (A + I) D^{-1/2}`` with degrees taken from ``A + I``."""
    a = g.adjacency() + np.eye(g.n_nodes)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def init_curvnet(rng: np.random.Generator, hidden: int = 16) -> dict[str, np.ndarray]:
    b1 = 1.0 / math.sqrt(N_DEGREE_FEATURES)
    b2 = 1.0 / math.sqrt(hidden)
    return {
        "M1": rng.uniform(-b1, b1, size=(N_DEGREE_FEATURES, hidden)),
        "M2": rng.uniform(-b2, b2, size=(hidden, 1)),
    }


class GraphInputs:
    """Per-graph constants CurvNet needs; computed once per session."""

    def __init__(self, g: Graph):
        self.a_hat = normalized_adjacency(g)
        self.z0 = degree_features(g)


def curvnet_forward(g: Graph | GraphInputs, params: dict, kappa_scale: float = DEFAULT_KAPPA_SCALE):
    """Differentiable graph curvature.

    ``params`` holds ``M1`` and ``M2`` as arrays or :class:`~riemcl.autodiff.Tensor`.
    Returns a scalar tensor with ``KAPPA_MIN <= |kappa| <= kappa_scale``; inside
    the dead zone the value is pinned to ``+-KAPPA_MIN`` and carries no gradient.
    """
    if not 0 < kappa_scale <= KAPPA_MAX:
        raise ValueError(f"kappa_scale must be in (0, {KAPPA_MAX}]")
    inputs = g if isinstance(g, GraphInputs) else GraphInputs(g)
    z1 = ad.relu(inputs.a_hat @ (inputs.z0 @ ad.as_tensor(params["M1"])))
    z2 = inputs.a_hat @ (z1 @ ad.as_tensor(params["M2"]))
    kappa = kappa_scale * ad.tanh(z2.mean())
    k = float(kappa.value)
    if abs(k) < KAPPA_MIN:
        return ad.Tensor(math.copysign(KAPPA_MIN, k) if k != 0 else KAPPA_MIN)
    return kappa
