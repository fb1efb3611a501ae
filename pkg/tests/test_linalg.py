import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mmanova.errors import AllZero, InvalidDof, NotPositiveDefinite
from mmanova.linalg import (
    cholesky_lower,
    is_pd,
    pd_mask,
    projector_complement,
    pseudo_det,
    quadratic_form_identity,
    rng_stream,
    sample_inv_wishart,
    sample_mvn,
    sample_wishart,
    sym_eigen,
)


def spd(seed, d):
    A = np.random.default_rng(seed).standard_normal((d, d))
    return A.T @ A + np.eye(d)


centering4 = np.eye(4) - 0.25


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky_lower(np.eye(3)), np.eye(3))

    def test_two_by_two(self):
        L = cholesky_lower(np.array([[4.0, 2.0], [2.0, 3.0]]))
        np.testing.assert_allclose(L, [[2, 0], [1, np.sqrt(2)]], atol=1e-15)

    def test_random_reconstruction(self):
        A = spd(5, 5)
        L = cholesky_lower(A)
        assert np.allclose(L, np.tril(L))
        assert np.linalg.norm(L @ L.T - A) <= 1e-12 * np.linalg.norm(A)

    @pytest.mark.parametrize("a", [np.diag([1.0, -0.1]), centering4])
    def test_rejects_non_pd(self, a):
        with pytest.raises(NotPositiveDefinite):
            cholesky_lower(a)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 10_000))
    def test_reconstruction_property(self, d, seed):
        A = spd(seed, d)
        L = cholesky_lower(A)
        assert np.linalg.norm(L @ L.T - A) <= 1e-12 * np.linalg.norm(A)


class TestEigen:
    def test_identity(self):
        e = sym_eigen(np.eye(2))
        np.testing.assert_allclose(e.values, [1, 1])
        np.testing.assert_allclose(e.vectors.T @ e.vectors, np.eye(2), atol=1e-14)

    def test_diagonal(self):
        e = sym_eigen(np.diag([1.0, 3.0]))
        np.testing.assert_allclose(e.values, [3, 1])
        np.testing.assert_allclose(np.abs(e.vectors), [[0, 1], [1, 0]], atol=1e-14)

    def test_centering_projector_spectrum(self):
        np.testing.assert_allclose(sym_eigen(centering4).values, [1, 1, 1, 0], atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 10_000))
    def test_reconstruction_and_orthonormality(self, d, seed):
        A = np.random.default_rng(seed).standard_normal((d, d)) * 10
        A = A + A.T
        e = sym_eigen(A)
        G = e.vectors
        assert np.all(np.diff(e.values) <= 0)
        assert np.linalg.norm(G @ np.diag(e.values) @ G.T - A) <= 1e-10 * max(1.0, np.linalg.norm(A))
        assert np.linalg.norm(G.T @ G - np.eye(d)) <= 1e-10


class TestPseudoDet:
    def test_examples(self):
        assert pseudo_det(np.eye(3)) == pytest.approx(1.0)
        assert pseudo_det(np.diag([0.0, 2.0, 3.0])) == pytest.approx(6.0)
        assert pseudo_det(centering4) == pytest.approx(1.0)

    def test_all_zero(self):
        with pytest.raises(AllZero):
            pseudo_det(np.zeros((3, 3)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_equals_det_for_full_rank(self, d, seed):
        A = spd(seed, d)
        assert pseudo_det(A) == pytest.approx(np.linalg.det(A), rel=1e-10)


class TestIsPD:
    def test_examples(self):
        assert is_pd(np.eye(3), 1e-10)
        assert not is_pd(np.diag([1.0, -0.1]))
        assert not is_pd(centering4)

    def test_batched_matches_scalar(self):
        stack = np.array([np.eye(2), np.diag([1.0, -1.0]), np.diag([1.0, 1e-14])])
        np.testing.assert_array_equal(pd_mask(stack), [True, False, False])


class TestSamplers:
    def test_inv_wishart_mean(self):
        X = sample_inv_wishart(np.eye(2), 10, rng_stream(1, 0), size=20000)
        assert np.linalg.norm(X.mean(0) - np.eye(2) / 7) <= 0.03 * np.linalg.norm(np.eye(2) / 7)

    def test_inv_wishart_scalar_matches_inverse_chi_square(self):
        s, nu = 2.5, 7
        x = sample_inv_wishart(np.array([[s]]), nu, rng_stream(1, 1), size=10000)[:, 0, 0]
        # s / chi2_nu is inverse-gamma(nu/2, scale s/2)
        assert stats.kstest(x, stats.invgamma(nu / 2, scale=s / 2).cdf).statistic < 0.02

    def test_wishart_scalar_matches_chi_square(self):
        x = sample_wishart(np.array([[2.0]]), 5, rng_stream(1, 2), size=10000)[:, 0, 0]
        assert stats.kstest(x / 2.0, stats.chi2(5).cdf).statistic < 0.02

    def test_wishart_moments(self):
        # E W = nu S; Var W_ij = nu (S_ij^2 + S_ii S_jj)
        S = np.array([[2.0, 0.5], [0.5, 1.0]])
        nu, R = 6, 20000
        W = sample_wishart(S, nu, rng_stream(2, 0), size=R)
        var = nu * (S ** 2 + np.outer(np.diag(S), np.diag(S)))
        se = np.sqrt(var / R)
        assert np.all(np.abs(W.mean(0) - nu * S) <= 3 * se)
        # the sample variance of an average of R draws has SE roughly var * sqrt(2/R) * kurtosis factor
        assert np.allclose(W.var(0), var, rtol=0.1)

    def test_inv_wishart_elementwise_variance(self):
        # d=2, Psi=I, dof k: Var X_ii = 2 / ((k-d-1)^2 (k-d-3))
        k, d, R = 12, 2, 20000
        X = sample_inv_wishart(np.eye(d), k, rng_stream(2, 1), size=R)
        v = 2 / ((k - d - 1) ** 2 * (k - d - 3))
        np.testing.assert_allclose(X[:, 0, 0].var(), v, rtol=0.12)

    def test_invalid_dof(self):
        with pytest.raises(InvalidDof):
            sample_inv_wishart(np.eye(3), 2.0, rng_stream(0))
        with pytest.raises(InvalidDof):
            sample_wishart(np.eye(3), 1.5, rng_stream(0))

    def test_determinism(self):
        a = sample_inv_wishart(np.eye(3), 5, rng_stream(9, 4))
        b = sample_inv_wishart(np.eye(3), 5, rng_stream(9, 4))
        c = sample_inv_wishart(np.eye(3), 5, rng_stream(9, 5))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_draws_are_exactly_symmetric(self):
        X = sample_inv_wishart(spd(3, 4), 9, rng_stream(3), size=50)
        np.testing.assert_array_equal(X, np.swapaxes(X, -1, -2))

    def test_mvn(self):
        z = sample_mvn(np.zeros(3), np.eye(3), rng_stream(4), size=50000)
        assert np.all(np.abs(z.mean(0)) < 0.02)
        z = sample_mvn(np.array([5.0, 5.0]), np.eye(2), rng_stream(4), size=50000)
        assert np.all(np.abs(z.mean(0) - 5) < 0.02)
        np.testing.assert_array_equal(
            sample_mvn(np.zeros(2), np.eye(2), rng_stream(8)), sample_mvn(np.zeros(2), np.eye(2), rng_stream(8))
        )

    def test_mvn_scalar_is_normal(self):
        z = sample_mvn(np.array([1.0]), np.array([[4.0]]), rng_stream(5), size=10000)[:, 0]
        assert stats.kstest(z, stats.norm(1, 2).cdf).statistic < 0.02

    def test_mvn_rejects_non_pd(self):
        with pytest.raises(NotPositiveDefinite):
            sample_mvn(np.zeros(2), np.diag([1.0, -1.0]), rng_stream(0))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_quadratic_form_identity(d, seed):
    rng = np.random.default_rng(seed)
    x, s, t = rng.standard_normal((3, d))
    lhs, rhs = quadratic_form_identity(x, s, t, spd(seed, d), spd(seed + 1, d) * rng.uniform(0.01, 100))
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_projector_complement():
    P = projector_complement(np.ones((1, 4)))
    np.testing.assert_allclose(P, centering4, atol=1e-15)
    np.testing.assert_allclose(P @ P, P, atol=1e-14)
