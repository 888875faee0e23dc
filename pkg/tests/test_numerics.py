import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from artivae.numerics import (RankDeficientError, fit_exponential_decay, ols_fit, pca,
                              residualize, sign_convention)

from oracles import dense_grid_exp_fit, ols_oracle, pca_oracle

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def _corr(a, b):
    a, b = a - a.mean(), b - b.mean()
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


class TestPca:
    def test_axis_aligned_line(self, rng):
        x = rng.standard_normal(100)
        res = pca(np.column_stack([x, np.zeros(100)]), 1)
        np.testing.assert_allclose(res.components[0], [1.0, 0.0], atol=1e-12)
        assert res.explained_variance[0] == pytest.approx(x.var(ddof=1), rel=1e-12)

    def test_perfectly_correlated(self):
        data = np.array([[1, 1], [-1, -1], [2, 2], [-2, -2]], dtype=float)
        res = pca(data, 1)
        np.testing.assert_allclose(res.components[0], [2**-0.5, 2**-0.5], atol=1e-12)

    def test_matches_jacobi_oracle(self, rng):
        data = rng.standard_normal((50, 3)) @ rng.standard_normal((3, 3))
        res = pca(data, 3)
        comps, evals = pca_oracle(data, 3)
        np.testing.assert_allclose(res.components, comps, atol=1e-8)
        np.testing.assert_allclose(res.explained_variance, evals, atol=1e-8)

    def test_projection_variance_equals_explained(self, rng):
        data = rng.standard_normal((200, 4)) * [3, 2, 1, 0.5]
        res = pca(data, 2)
        np.testing.assert_allclose(res.transform(data).var(axis=0, ddof=1),
                                   res.explained_variance, rtol=1e-10)

    def test_degenerate_input_gives_zero_variance(self):
        res = pca(np.ones((10, 3)), 2)
        np.testing.assert_array_equal(res.explained_variance, 0.0)
        np.testing.assert_allclose(res.components @ res.components.T, np.eye(2), atol=1e-12)
        np.testing.assert_array_equal(res.components, sign_convention(res.components))

    def test_errors(self):
        with pytest.raises(ValueError):
            pca(np.ones((1, 3)), 1)
        with pytest.raises(ValueError):
            pca(np.ones((5, 3)), 4)
        with pytest.raises(ValueError):
            pca(np.ones((5, 3)), 0)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(1, 5)), elements=finite))
    def test_orthonormal_sorted_and_trace(self, data):
        k = data.shape[1]
        res = pca(data, k)
        np.testing.assert_allclose(res.components @ res.components.T, np.eye(k), atol=1e-10)
        assert np.all(np.diff(res.explained_variance) <= 1e-9 * max(res.explained_variance[0], 1))
        trace = np.trace(np.atleast_2d(np.cov(data, rowvar=False)))
        assert abs(res.explained_variance.sum() - trace) <= 1e-8 * max(trace, 1.0)
        big = np.argmax(np.abs(res.components), axis=1)
        assert np.all(res.components[np.arange(k), big] >= 0)


class TestOls:
    def test_exact_linear(self):
        x = np.arange(10.0)
        fit = ols_fit(x, 2 * x + 3)
        np.testing.assert_allclose(fit.coefficients, [[2.0]], atol=1e-12)
        np.testing.assert_allclose(fit.intercept, [3.0], atol=1e-12)
        np.testing.assert_allclose(residualize(x, 2 * x + 3, fit), 0.0, atol=1e-12)

    def test_matches_normal_equations(self, rng):
        X, Y = rng.standard_normal((20, 2)), rng.standard_normal((20, 3))
        fit = ols_fit(X, Y)
        coef, icpt = ols_oracle(X, Y)
        np.testing.assert_allclose(fit.coefficients, coef, atol=1e-8)
        np.testing.assert_allclose(fit.intercept, icpt, atol=1e-8)

    def test_residual_matches_oracle(self, rng):
        X, Y = rng.standard_normal((30, 2)), rng.standard_normal((30, 2))
        coef, icpt = ols_oracle(X, Y)
        np.testing.assert_allclose(residualize(X, Y, ols_fit(X, Y)), Y - (X @ coef + icpt),
                                   atol=1e-10)

    def test_null_relation(self, rng):
        X, Y = rng.standard_normal((10000, 2)), rng.standard_normal((10000, 1))
        fit = ols_fit(X, Y)
        assert np.all(np.abs(fit.coefficients) < 0.1)
        assert residualize(X, Y, fit).var() == pytest.approx(Y.var(), rel=0.1)

    def test_rank_deficient_names_column(self, rng):
        x = rng.standard_normal(20)
        with pytest.raises(RankDeficientError, match="column 1") as err:
            ols_fit(np.column_stack([x, 2 * x]), x)
        assert err.value.column == 1
        with pytest.raises(RankDeficientError, match="column 0"):
            ols_fit(np.column_stack([np.ones(20), x]), x)

    def test_shape_errors(self, rng):
        X, Y = rng.standard_normal((10, 2)), rng.standard_normal((10, 1))
        fit = ols_fit(X, Y)
        with pytest.raises(ValueError):
            residualize(X[:, :1], Y, fit)
        with pytest.raises(ValueError):
            ols_fit(X, Y[:5])
        with pytest.raises(ValueError):
            ols_fit(X[:2], Y[:2])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 3))
    def test_residuals_orthogonal_and_centered(self, seed, p, q):
        r = np.random.default_rng(seed)
        X = r.standard_normal((40, p)) * r.uniform(0.1, 10, p)
        Y = X @ r.standard_normal((p, q)) + r.standard_normal((40, q))
        res = residualize(X, Y, ols_fit(X, Y))
        np.testing.assert_allclose(res.mean(axis=0), 0.0, atol=1e-10)
        for i in range(p):
            for j in range(q):
                assert abs(_corr(X[:, i], res[:, j])) < 1e-8


class TestExponentialFit:
    def test_noiseless_recovery(self):
        t = np.arange(60.0)
        fit = fit_exponential_decay(t, 1.0 + 2.0 * np.exp(-0.3 * t))
        np.testing.assert_allclose([fit.offset, fit.amplitude, fit.rate], [1, 2, 0.3], rtol=1e-6)

    def test_constant_series(self):
        fit = fit_exponential_decay(np.arange(5.0), np.full(5, 5.0))
        assert (fit.offset, fit.amplitude, fit.rate) == (5.0, 0.0, 0.0)

    def test_not_worse_than_dense_grid(self, rng):
        t = np.arange(60.0)
        v = 1.0 + 2.0 * np.exp(-0.3 * t) + rng.normal(0, 0.01, t.size)
        fit = fit_exponential_decay(t, v)
        sse = float(((v - fit(t)) ** 2).sum())
        assert sse <= dense_grid_exp_fit(t, v) * (1 + 1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_exponential_decay(np.arange(3.0), np.arange(3.0))
        with pytest.raises(ValueError):
            fit_exponential_decay(np.array([0, 2, 1, 3.0]), np.arange(4.0))

    def test_deterministic(self, rng):
        t = np.arange(1, 31.0)
        v = 0.05 + np.exp(-0.2 * t) + rng.normal(0, 1e-3, t.size)
        assert fit_exponential_decay(t, v) == fit_exponential_decay(t, v)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 2.0), st.floats(-3, 3))
    def test_never_worse_than_own_grid(self, seed, c, b):
        r = np.random.default_rng(seed)
        t = np.arange(1, 31.0)
        v = 0.5 + b * np.exp(-c * t) + r.normal(0, 0.05, t.size)
        fit = fit_exponential_decay(t, v)
        sse = float(((v - fit(t)) ** 2).sum())
        def grid_sse(g):
            basis = np.column_stack([np.ones_like(t), np.exp(-g * t)])
            coef = np.linalg.lstsq(basis, v, rcond=None)[0]
            return float(((v - basis @ coef) ** 2).sum())

        grid_best = min(grid_sse(g) for g in np.logspace(-3, 1, 200))
        assert sse <= grid_best * (1 + 1e-9) + 1e-15
        assert fit.rate >= 0
