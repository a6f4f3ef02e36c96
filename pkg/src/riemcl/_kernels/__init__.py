"""Hot loops with a compiled backend and a pure-Python fallback.

The compiled module is used when it was built and ``RIEMCL_PURE_PYTHON`` is
unset; :data:`BACKEND` names the active one.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback
if not os.environ.get("RIEMCL_PURE_PYTHON"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def forman_directed(indptr, indices, w, backend=None):
    """Forman curvature ``F_ij`` for every directed edge in CSR order."""
    impl = _select(backend)
    return impl.forman_directed(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(w, dtype=np.float64),
    )


def pairwise_distance(x, y, kappa, backend=None):
    """Geodesic distance between every row of ``x`` and every row of ``y``."""
    impl = _select(backend)
    return impl.pairwise_distance(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        float(kappa),
    )


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _fallback
    if backend == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {backend!r}")
