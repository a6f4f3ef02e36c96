"""Frozen-encoder evaluation: prototype classification, PM/FM, embedding distortion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from . import _kernels
from . import autodiff as ad
from . import diffgeo as dg
from . import lorentz
from .graphstore import Graph
from .manifold import distance


class EmptyClassError(ValueError):
    pass


def prototypes(train_emb, train_labels, kappa: float, num_classes: int | None = None) -> np.ndarray:
    """Uniform-weight centroid of each class's training embeddings, one row per class id."""
    train_emb = np.atleast_2d(np.asarray(train_emb, dtype=np.float64))
    train_labels = np.asarray(train_labels, dtype=np.int64)
    if len(train_labels) != len(train_emb):
        raise ValueError("one label per training embedding")
    k = int(train_labels.max()) + 1 if num_classes is None else int(num_classes)
    counts = np.bincount(train_labels, minlength=k)
    if len(counts) > k:
        raise ValueError(f"label {len(counts) - 1} outside 0..{k - 1}")
    if np.any(counts == 0):
        raise EmptyClassError(f"class {int(np.flatnonzero(counts == 0)[0])} has no training nodes")
    weights = (np.arange(k)[:, None] == train_labels[None, :]) / counts[:, None]
    return dg.aggregate(ad.Tensor(train_emb), ad.Tensor(weights), kappa).value


def classify(train_emb, train_labels, test_emb, kappa: float, num_classes: int | None = None) -> np.ndarray:
    """Nearest prototype by geodesic distance; ties go to the smallest class id."""
    protos = prototypes(train_emb, train_labels, kappa, num_classes)
    d = _kernels.pairwise_distance(np.atleast_2d(test_emb), protos, kappa)
    return np.argmin(d, axis=1)


def accuracy(g: Graph, emb: np.ndarray, kappa: float) -> float:
    """Test accuracy of the prototype classifier fitted on the training mask."""
    labels = g.labels
    pred = classify(emb[g.train_mask], labels[g.train_mask], emb[g.test_mask], kappa, g.num_classes)
    return float(np.mean(pred == labels[g.test_mask]))


class AccuracyMatrix:
    """``a[t, i]``: accuracy on task ``i`` after training through task ``t`` (``t >= i``)."""

    def __init__(self, n_tasks: int):
        if n_tasks < 1:
            raise ValueError("need at least one task")
        self.a = np.full((n_tasks, n_tasks), np.nan)

    @classmethod
    def from_array(cls, a) -> "AccuracyMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("accuracy matrix must be square")
        m = cls(a.shape[0])
        for t in range(a.shape[0]):
            for i in range(t + 1):
                m.set(t, i, a[t, i])
        return m

    @property
    def n_tasks(self) -> int:
        return self.a.shape[0]

    def set(self, t: int, i: int, value: float) -> None:
        if i > t:
            raise IndexError("task i is not seen yet after training through task t")
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"accuracy {value} outside [0, 1]")
        self.a[t, i] = value

    def __getitem__(self, ti):
        return self.a[ti]


def pm_fm(acc: AccuracyMatrix | np.ndarray) -> tuple[float, float]:
    """Final average accuracy and the mean change on earlier tasks (negative means forgetting)."""
    a = acc.a if isinstance(acc, AccuracyMatrix) else np.asarray(acc, dtype=np.float64)
    t = a.shape[0]
    pm = float(np.mean(a[t - 1, :t]))
    if t < 2:
        raise ValueError("forgetting needs at least two tasks")
    fm = float(np.mean(a[t - 1, : t - 1] - np.diag(a)[: t - 1]))
    return pm, fm


def performance_mean(acc) -> float:
    a = acc.a if isinstance(acc, AccuracyMatrix) else np.asarray(acc, dtype=np.float64)
    return float(np.mean(a[-1]))


@dataclass(frozen=True)
class DistortionReport:
    value: float
    pairs_used: int
    pairs_skipped: int


def distortion(g: Graph, emb, kappa: float) -> DistortionReport:
    """Mean of ``|1 - d_M / d_G|`` over all ordered pairs, ``d_G`` the shortest path over embedded edge lengths."""
    emb = np.asarray(emb, dtype=np.float64)
    n = g.n_nodes
    if emb.shape[0] != n:
        raise ValueError(f"{emb.shape[0]} embeddings for {n} nodes")
    d_m = _kernels.pairwise_distance(emb, emb, kappa)
    if g.n_edges:
        u, v = g.edges[:, 0], g.edges[:, 1]
        # coincident endpoints would read as a missing edge; keep them as tiny lengths
        lengths = np.maximum(d_m[u, v], np.finfo(float).tiny)
        adj = csr_matrix((np.concatenate([lengths, lengths]), (np.concatenate([u, v]), np.concatenate([v, u]))),
                         shape=(n, n))
        d_g = shortest_path(adj, method="D", directed=False)
    else:
        d_g = np.full((n, n), np.inf)
        np.fill_diagonal(d_g, 0.0)
    ok = np.isfinite(d_g) & (d_g > 0)
    total = float(np.sum(np.abs(1.0 - d_m[ok] / d_g[ok])))
    used = int(ok.sum())
    return DistortionReport(total / n**2, used, n * n - used)


def tangent_baseline_similarity(x, y, params: dict, kappa1: float, kappa2: float) -> float:
    """``-d(exp_O^{k2}(W log_O^{k1}(x) + b), y)``: the projection with the Lorentz layer swapped out."""
    x = np.asarray(x, dtype=np.float64)
    p = lorentz.tangent_forward(np.atleast_2d(x), params["W"], params.get("b"), kappa1, kappa2).value
    d = distance(p if x.ndim > 1 else p[0], np.asarray(y, dtype=np.float64), kappa2)
    return -d if np.ndim(d) else -float(d)
