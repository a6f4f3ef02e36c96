import os
import subprocess
import sys

import numpy as np
import pytest

from riemcl import _kernels
from riemcl import manifold as M
from riemcl.curvnet import node_weights
from riemcl.graphstore import synth_sequence

needs_ext = pytest.mark.skipif(_kernels.BACKEND != "cython", reason="compiled extension not built")


def _graph():
    spec = {"feature_dim": 2, "seed": 5, "tasks": [{"generator": "erdos_renyi", "n": 40, "p": 0.15}]}
    return synth_sequence(spec)[0].load()


@needs_ext
class TestBackendsAgree:
    def test_forman(self):
        g = _graph()
        indptr, indices = g.csr()
        w = node_weights(g)
        a = _kernels.forman_directed(indptr, indices, w, backend="cython")
        b = _kernels.forman_directed(indptr, indices, w, backend="python")
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-12)

    @pytest.mark.parametrize("k", [-2.0, -0.1, 0.1, 2.0])
    def test_distance(self, k):
        rng = np.random.default_rng(0)
        x = M.random_point(6, k, rng, 0.7, size=25)
        y = M.random_point(6, k, rng, 0.7, size=15)
        a = _kernels.pairwise_distance(x, y, k, backend="cython")
        b = _kernels.pairwise_distance(x, y, k, backend="python")
        np.testing.assert_allclose(a, b, atol=1e-13)


class TestDistanceKernel:
    @pytest.mark.parametrize("k", [-1.0, 1.0])
    def test_matches_scalar_distance(self, k):
        rng = np.random.default_rng(1)
        x = M.random_point(3, k, rng, 0.7, size=6)
        d = _kernels.pairwise_distance(x, x, k)
        for i in range(6):
            for j in range(6):
                assert d[i, j] == pytest.approx(float(M.distance(x[i], x[j], k)), abs=1e-12)

    def test_zero_diagonal(self):
        x = M.random_point(4, -0.5, np.random.default_rng(2), 1.0, size=10)
        assert np.all(np.diag(_kernels.pairwise_distance(x, x, -0.5)) == 0.0)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            _kernels.pairwise_distance(np.ones((1, 2)), np.ones((1, 2)), 1.0, backend="fortran")


def test_env_var_forces_fallback():
    env = dict(os.environ, RIEMCL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from riemcl import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
