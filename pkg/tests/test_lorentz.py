import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemcl import autodiff as ad
from riemcl import diffgeo as dg
from riemcl import lorentz as L
from riemcl import manifold as M

SIGN_PAIRS = [(-1.0, -0.5), (-1.0, 0.5), (1.0, -0.5), (1.0, 0.5)]


def feasible_w(x, d2, k2, rng, scale=1.0):
    """Random ``d2 x d1`` map, shrunk if needed so ``|W x_s|^2 < 1/k2`` on a sphere target."""
    w = rng.normal(size=(d2, x.shape[-1] - 1)) * scale
    if k2 > 0:
        n = np.linalg.norm(np.atleast_2d(x)[:, 1:] @ w.T, axis=-1).max()
        limit = 0.9 / np.sqrt(k2)
        if n > limit:
            w *= limit / n
    return w


class TestGLP:
    @pytest.mark.parametrize("k", [-2.0, -0.3, 0.3, 2.0])
    def test_identity(self, k):
        x = M.random_point(4, k, np.random.default_rng(0), 0.5)
        np.testing.assert_allclose(L.glp_apply(x, np.eye(4), k, k), x, atol=1e-12)
        assert L.glp_time_scale(x, np.eye(4), k, k)[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("k", [-1.0, 1.0])
    def test_rotation(self, k):
        rng = np.random.default_rng(1)
        r = L.random_rotation(5, rng)
        assert np.linalg.det(r) == pytest.approx(1.0)
        x = M.random_point(5, k, rng, 0.5)
        expected = np.concatenate([[x[0]], r @ x[1:]])
        np.testing.assert_allclose(L.glp_apply(x, r, k, k), expected, atol=1e-12)

    def test_cross_manifold_closure(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            x = M.random_point(8, -1.0, rng, 0.5)
            y = L.glp_apply(x, feasible_w(x, 4, 0.5, rng), -1.0, 0.5)
            assert abs(M.inner(y, y, 0.5) - 2.0) < 1e-8

    @settings(max_examples=60, deadline=None)
    @given(pair=st.sampled_from(SIGN_PAIRS), d1=st.sampled_from([2, 4, 8]), d2=st.sampled_from([2, 4, 8]),
           seed=st.integers(0, 2**31))
    def test_closure_property(self, pair, d1, d2, seed):
        k1, k2 = pair
        rng = np.random.default_rng(seed)
        x = M.random_point(d1, k1, rng, 0.5)
        y = L.lorentz_layer(x, feasible_w(x, d2, k2, rng), rng.normal(size=d2) * 0.01, k1, k2, "strict")
        assert M.manifold_residual(y, k2) < 1e-8 * max(1.0, 1 / abs(k2))

    def test_hyperbolic_target_upper_sheet(self):
        rng = np.random.default_rng(3)
        x = M.random_point(3, 1.0, rng)
        x[0] = -abs(x[0])  # point on the lower hemisphere of the sphere
        y = L.glp_apply(x, np.eye(3), 1.0, -1.0)
        assert y[0] > 0

    def test_sphere_target_keeps_hemisphere(self):
        x = np.array([-0.6, 0.8, 0.0])
        y = L.glp_apply(x, np.eye(2), 1.0, 1.0)
        np.testing.assert_allclose(y, x, atol=1e-15)

    def test_literal_time_scale_agrees(self):
        rng = np.random.default_rng(4)
        for k1, k2 in SIGN_PAIRS:
            x = M.random_point(4, k1, rng, 0.5)
            w = feasible_w(x, 3, k2, rng)
            y = L.glp_apply(x, w, k1, k2)
            assert y[0] == pytest.approx(L.glp_time_scale(x, w, k1, k2)[0] * x[0], rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            L.glp_apply(M.origin(3, 1.0), np.eye(4), 1.0, 1.0)


class TestFeasibility:
    def test_strict_raises(self):
        x = M.origin(2, -1.0)
        with pytest.raises(L.ProjectionInfeasible):
            L.lorentz_layer(x, np.eye(2), np.array([5.0, 0.0]), -1.0, 1.0, "strict")

    def test_lenient_rescales_to_boundary(self):
        x = M.origin(2, -1.0)
        y = L.lorentz_layer(x, np.eye(2), np.array([5.0, 0.0]), -1.0, 1.0, "lenient")
        assert np.sum(y[1:] ** 2) == pytest.approx(1 - 1e-9)
        assert M.manifold_residual(y, 1.0) < 1e-8

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            L.lorentz_layer(M.origin(2, -1.0), np.eye(2), np.array([5.0, 0.0]), -1.0, 1.0, "loose")

    def test_lenient_gradient_through_curvature(self):
        rng = np.random.default_rng(12)
        x = M.random_point(3, -1.0, rng, 0.8, size=4)
        params = {"W": rng.normal(size=(2, 3)) * 2.0, "b": rng.normal(size=2), "kappa": np.array(1.3)}
        out = L.lorentz_forward(x, params["W"], params["b"], params["kappa"], "lenient").value
        assert np.any(np.sum(out[:, 1:] ** 2, axis=1) > 0.99 / 1.3)  # some rows were rescaled
        report = ad.grad_check(lambda p: L.lorentz_forward(x, p["W"], p["b"], p["kappa"], "lenient")[:, 1:].sum(),
                               params)
        assert report.ok

    def test_max_feasible_norm(self):
        assert L.max_feasible_norm(-1.0) == np.inf
        assert L.max_feasible_norm(4.0) == 0.5


class TestLayer:
    def test_zero_bias_is_glp(self):
        rng = np.random.default_rng(5)
        x = M.random_point(4, -1.0, rng)
        w = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(L.lorentz_layer(x, w, np.zeros(3), -1.0, -2.0), L.glp_apply(x, w, -1.0, -2.0))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(6)
        xs = M.random_point(4, -1.0, rng, size=5)
        w, b = rng.normal(size=(3, 4)), rng.normal(size=3)
        batch = L.lorentz_layer(xs, w, b, -1.0, -0.5)
        for i in range(5):
            np.testing.assert_allclose(batch[i], L.lorentz_layer(xs[i], w, b, -1.0, -0.5), atol=1e-15)

    def test_init_orthonormal_rows(self):
        p = L.init_lorentz(8, 4, np.random.default_rng(7))
        np.testing.assert_allclose(p["W"] @ p["W"].T, np.eye(4), atol=1e-12)
        assert not p["b"].any()


class TestSimilarity:
    def test_self_projection_zero(self):
        rng = np.random.default_rng(8)
        x = M.random_point(4, -1.0, rng, 0.3)
        params = {"W": rng.normal(size=(3, 4)) * 0.3, "b": rng.normal(size=3) * 0.1}
        y = L.lorentz_layer(x, params["W"], params["b"], -1.0, 0.5)
        assert L.lorentz_similarity(x, y, params, -1.0, 0.5) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_nonpositive(self, seed):
        rng = np.random.default_rng(seed)
        x, y = M.random_point(3, 1.0, rng, 0.4), M.random_point(2, -1.0, rng)
        params = {"W": rng.normal(size=(2, 3)), "b": np.zeros(2)}
        assert L.lorentz_similarity(x, y, params, 1.0, -1.0) <= 0.0

    def test_monotone_along_geodesic(self):
        rng = np.random.default_rng(9)
        x = M.random_point(3, -1.0, rng, 0.2)
        params = L.init_lorentz(3, 3, rng)
        p = L.lorentz_layer(x, params["W"], params["b"], -1.0, 1.0)
        v = M.random_tangent_at(p, 1.0, rng)
        v /= M.tangent_norm(v, 1.0)
        sims = [L.lorentz_similarity(x, M.exp_map(p, t * v, 1.0), params, -1.0, 1.0) for t in np.linspace(0, 3, 12)]
        assert all(b < a for a, b in zip(sims, sims[1:]))

    def test_gradients(self):
        rng = np.random.default_rng(10)
        k1, k2 = -1.0, 0.7
        x = M.random_point(4, k1, rng, 0.5, size=6)
        y = M.random_point(3, k2, rng, 0.5, size=6)
        params = {"W": rng.normal(size=(3, 4)) * 0.2, "b": rng.normal(size=3) * 0.05,
                  "vx": rng.normal(size=(6, 4)) * 0.5, "vy": rng.normal(size=(6, 3)) * 0.5}
        def loss(p):
            px = dg.exp0(p["vx"], dg.as_curv(k1))  # upstream parameters of the points
            py = dg.exp0(p["vy"], dg.as_curv(k2))
            proj = L.lorentz_forward(px, p["W"], p["b"], k2, "strict")
            return -dg.rowwise_distance(proj, py, k2).sum()

        assert ad.grad_check(loss, params).ok

    def test_tangent_variant_on_manifold(self):
        rng = np.random.default_rng(11)
        x = M.random_point(4, -1.0, rng, size=5)
        out = L.tangent_forward(x, rng.normal(size=(3, 4)), np.zeros(3), -1.0, 2.0).value
        assert np.all(M.manifold_residual(out, 2.0) < 1e-8)
