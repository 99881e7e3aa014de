"""Tests for the core samplers and decompositions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mda_impute.errors import (
    EmptyBox,
    EmptyInterval,
    InfeasibleStart,
    NonpositiveDf,
    NotPositiveDefinite,
    SingularCholesky,
)
from mda_impute.sampling.distributions import (
    LdlFactors,
    NormalGammaParams,
    TruncationBox,
    conditional_normal,
    conditional_normal_draws,
    ldl_decompose,
    normal_gamma_from_noise,
    normal_gamma_sample,
    normal_gamma_sample_marginal,
    truncated_mvn_sample,
    truncated_mvn_sample_batch,
    truncated_normal,
    truncated_standard_normal,
    univariate_truncated_normal,
)


def _within(estimate: float, target: float, se: float, k: float = 4.0) -> bool:
    return abs(estimate - target) <= k * se


class TestLdlDecompose:
    """LDL factorization of covariance matrices."""

    def test_identity(self):
        factors = ldl_decompose(np.eye(2))
        np.testing.assert_allclose(factors.L, np.eye(2))
        np.testing.assert_allclose(factors.Lambda, np.eye(2))

    def test_two_by_two_hand_elimination(self):
        factors = ldl_decompose([[1.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(factors.L, [[1.0, 0.0], [0.5, 1.0]])
        np.testing.assert_allclose(np.diag(factors.Lambda), [1.0, 0.75])
        assert factors.beta[1, 0] == pytest.approx(0.5)
        assert factors.gamma[1] == pytest.approx(4.0 / 3.0)

    def test_random_matrix_recomposes(self, rng):
        A = rng.standard_normal((5, 5))
        sigma = A @ A.T + 0.5 * np.eye(5)
        factors = ldl_decompose(sigma)
        error = np.linalg.norm(sigma - factors.sigma()) / np.linalg.norm(sigma)
        assert error < 1e-12
        np.testing.assert_allclose(factors.U @ factors.L, np.eye(5), atol=1e-12)

    def test_from_regression_matches_decomposition(self, rng):
        A = rng.standard_normal((4, 4))
        sigma = A @ A.T + np.eye(4)
        factors = ldl_decompose(sigma)
        rebuilt = LdlFactors.from_regression(factors.beta, factors.gamma)
        np.testing.assert_allclose(rebuilt.sigma(), sigma, rtol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(NotPositiveDefinite, match="symmetric"):
            ldl_decompose([[1.0, 0.2], [0.3, 1.0]])

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            ldl_decompose([[1.0, 2.0], [2.0, 1.0]])

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(
            st.floats(min_value=-3, max_value=3, allow_nan=False), min_size=9, max_size=9
        )
    )
    def test_precisions_positive(self, entries):
        A = np.array(entries).reshape(3, 3)
        factors = ldl_decompose(A @ A.T + np.eye(3))
        assert np.all(factors.gamma > 0)


class TestNormalGamma:
    """Normal-gamma draws NG(f, D)."""

    def test_precision_and_coefficient_means(self, rng):
        params = NormalGammaParams(f=5.0, D=np.eye(2))
        theta, gamma = normal_gamma_sample(params, rng, size=200_000)
        n = gamma.shape[0]
        assert _within(gamma.mean(), 5.0, gamma.std() / np.sqrt(n))
        assert _within(theta[:, 0].mean(), 0.0, theta[:, 0].std() / np.sqrt(n))

    def test_conditional_scale(self, rng):
        params = NormalGammaParams(f=1.0, D=np.diag([4.0, 1.0]))
        theta, gamma = normal_gamma_sample(params, rng, size=200_000)
        scaled = theta[:, 0] * np.sqrt(gamma)
        n = scaled.shape[0]
        assert _within(scaled.var(), 0.25, 0.25 * np.sqrt(2.0 / n))

    def test_forms_are_pathwise_identical(self, rng):
        D = np.array([[2.0, 0.3, 0.5], [0.3, 1.5, 0.4], [0.5, 0.4, 1.2]])
        params = NormalGammaParams(f=4.0, D=D)
        e_theta = rng.standard_normal((50, 2))
        e_m = np.sqrt(rng.chisquare(4.0, size=50))
        theta_a, gamma_a = normal_gamma_from_noise(params, e_theta, e_m, form="cholesky")
        theta_b, gamma_b = normal_gamma_from_noise(params, e_theta, e_m, form="partitioned")
        np.testing.assert_allclose(theta_a, theta_b, atol=1e-10)
        np.testing.assert_allclose(gamma_a, gamma_b, atol=1e-10)

    def test_single_draw_shapes(self, rng):
        theta, gamma = normal_gamma_sample(NormalGammaParams(f=3.0, D=np.eye(3)), rng)
        assert theta.shape == (2,)
        assert isinstance(gamma, float)

    def test_marginal_route_matches_joint_law(self, rng):
        D = np.array([[2.0, 0.3, 0.5], [0.3, 1.5, 0.4], [0.5, 0.4, 1.2]])
        params = NormalGammaParams(f=6.0, D=D)
        n = 100_000
        theta, gamma = normal_gamma_sample(params, rng, size=n)
        beta, gamma_m, alpha = normal_gamma_sample_marginal(params, 1, rng, size=n)
        pairs = [
            (theta[:, 0], alpha[:, 0]),
            (theta[:, 1], beta[:, 0]),
            (gamma, gamma_m),
            (theta[:, 0] ** 2, alpha[:, 0] ** 2),
        ]
        for joint, marginal in pairs:
            se = np.sqrt(joint.var() / n + marginal.var() / n)
            assert _within(joint.mean(), marginal.mean(), se)

    def test_nonpositive_df_rejected(self, rng):
        with pytest.raises(NonpositiveDf):
            normal_gamma_sample(NormalGammaParams(f=0.0, D=np.eye(2)), rng)

    def test_singular_scale_rejected(self, rng):
        D = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        params = NormalGammaParams(f=3.0, D=D)
        assert not params.full_rank
        with pytest.raises(SingularCholesky):
            normal_gamma_sample(params, rng)

    def test_rejects_indefinite_scale(self):
        with pytest.raises(NotPositiveDefinite):
            NormalGammaParams(f=3.0, D=np.array([[1.0, 0.0], [0.0, -1.0]]))


class TestTruncatedNormal:
    """Univariate truncated normal draws."""

    def test_unbounded_is_standard_normal(self, rng):
        draws = truncated_standard_normal(
            np.full(100_000, -np.inf), np.full(100_000, np.inf), rng
        )
        assert stats.kstest(draws, "norm").statistic < 0.01

    def test_half_normal_mean(self, rng):
        n = 100_000
        draws = truncated_standard_normal(np.zeros(n), np.full(n, np.inf), rng)
        assert np.all(draws > 0)
        assert _within(draws.mean(), np.sqrt(2.0 / np.pi), draws.std() / np.sqrt(n))

    def test_far_tail(self, rng):
        n = 20_000
        draws = truncated_standard_normal(np.full(n, 5.0), np.full(n, np.inf), rng)
        assert np.all(draws > 5.0)
        assert draws.mean() == pytest.approx(5.1865, abs=0.01)

    def test_negative_far_tail(self, rng):
        draws = truncated_standard_normal(np.full(1000, -np.inf), np.full(1000, -6.0), rng)
        assert np.all(draws < -6.0)

    def test_shifted_interval_matches_quadrature(self, rng):
        n = 50_000
        draws = truncated_normal(np.full(n, 2.0), 2.0, 1.0, 3.0, rng)
        assert np.all((draws > 1.0) & (draws < 3.0))
        expected = stats.truncnorm.mean(-0.5, 0.5, loc=2.0, scale=2.0)
        assert _within(draws.mean(), expected, draws.std() / np.sqrt(n))

    def test_scalar_wrapper(self, rng):
        value = univariate_truncated_normal(0.0, 1.0, 0.7, 1.1, rng)
        assert 0.7 < value < 1.1

    def test_empty_interval(self, rng):
        with pytest.raises(EmptyInterval):
            univariate_truncated_normal(0.0, 1.0, 1.0, 1.0, rng)
        with pytest.raises(EmptyInterval):
            univariate_truncated_normal(0.0, 0.0, 0.0, 1.0, rng)


class TestTruncatedMvn:
    """Gibbs sweeps for box-truncated multivariate normals."""

    def test_unbounded_mean(self, rng):
        n = 100_000
        x = truncated_mvn_sample_batch(
            np.zeros((n, 1)), np.eye(1), -np.inf, np.inf, np.zeros((n, 1)), rng
        )
        assert _within(x.mean(), 0.0, 1.0 / np.sqrt(n))

    def test_positive_orthant_mean(self, rng):
        rho = 0.8
        n = 20_000
        chol = np.linalg.cholesky([[1.0, rho], [rho, 1.0]])
        x = truncated_mvn_sample_batch(
            np.zeros((n, 2)), chol, 0.0, np.inf, np.ones((n, 2)), rng, cycles=40
        )
        assert np.all(x >= 0)
        mass = 0.25 + np.arcsin(rho) / (2 * np.pi)
        expected = stats.norm.pdf(0.0) * (1 + rho) / 2 / mass
        for column in x.T:
            assert _within(column.mean(), expected, column.std() / np.sqrt(n), k=5)

    def test_single_vector_wrapper(self, rng):
        box = TruncationBox(np.array([0.0, -np.inf]), np.array([1.0, 0.0]))
        x = truncated_mvn_sample(np.zeros(2), np.eye(2), box, [0.5, -0.5], rng, cycles=3)
        assert box.contains(x)

    def test_infeasible_start(self, rng):
        box = TruncationBox(np.array([0.0]), np.array([1.0]))
        with pytest.raises(InfeasibleStart):
            truncated_mvn_sample(np.zeros(1), np.eye(1), box, [2.0], rng)

    def test_empty_box(self):
        with pytest.raises(EmptyBox):
            TruncationBox(np.array([1.0, 0.0]), np.array([0.5, 1.0]))


class TestConditionalNormal:
    """Conditional laws of partitioned normals."""

    def test_bivariate(self):
        mean, cov = conditional_normal(
            [0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], [True, False], [1.0]
        )
        assert mean[0] == pytest.approx(0.5)
        assert cov[0, 0] == pytest.approx(0.75)

    def test_nothing_given(self):
        mean, cov = conditional_normal([1.0, 2.0], np.eye(2), [False, False], [])
        np.testing.assert_allclose(mean, [1.0, 2.0])
        np.testing.assert_allclose(cov, np.eye(2))

    def test_draws_keep_given_cells(self, rng):
        values = np.array([[1.0, np.nan, np.nan], [np.nan, 2.0, np.nan], [0.5, 0.5, 0.5]])
        given = ~np.isnan(values)
        out = conditional_normal_draws(np.zeros((3, 3)), np.eye(3) + 0.2, values, given, rng)
        assert not np.any(np.isnan(out))
        np.testing.assert_array_equal(out[given], values[given])
