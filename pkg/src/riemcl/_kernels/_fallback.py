"""Pure-Python / numpy versions of the compiled kernels (same signatures)."""

import numpy as np


def forman_directed(indptr, indices, w):
    w = np.asarray(w, dtype=np.float64)
    out = np.empty(len(indices))
    for i in range(len(indptr) - 1):
        nb_i = indices[indptr[i]:indptr[i + 1]]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            nb_j = indices[indptr[j]:indptr[j + 1]]
            base = w[i] ** 2 + w[j] ** 2
            li = nb_i[nb_i != j]
            kj = nb_j[nb_j != i]
            s1 = np.sum(((w[i] ** 2 + w[li] ** 2) / base) ** 0.25 * w[li])
            s2 = np.sum(((w[i] ** 2 + w[kj] ** 2) / base) ** 0.25 * w[kj])
            out[p] = w[i] + w[j] - s1 - s2
    return out


def chord_distance(x, y, kappa):
    """Geodesic distance from chord lengths; broadcasts over leading axes."""
    diff = x - y
    if kappa > 0:
        dm = np.sqrt(np.sum(diff * diff, axis=-1))
        dp = np.sqrt(np.sum((x + y) ** 2, axis=-1))
        return 2.0 * np.arctan2(dm, dp) / np.sqrt(kappa)
    sq = np.sum(diff[..., 1:] ** 2, axis=-1) - diff[..., 0] ** 2
    return 2.0 * np.arcsinh(0.5 * np.sqrt(-kappa) * np.sqrt(np.maximum(sq, 0.0))) / np.sqrt(-kappa)


def pairwise_distance(x, y, kappa, block=256):
    out = np.empty((x.shape[0], y.shape[0]))
    for s in range(0, x.shape[0], block):
        out[s:s + block] = chord_distance(x[s:s + block, None, :], y[None, :, :], kappa)
    return out
