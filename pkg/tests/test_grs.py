"""Joint pricing-error test: dense-arithmetic oracle, invariances, and
finite-sample size."""

import numpy as np
import pytest

from cyrisk.apt.grs import (
    GrsResult,
    SingularCovarianceError,
    TooShortSampleError,
    grs_test,
    grs_w,
)
from cyrisk.apt.linreg import f_cdf


def dense_oracle(R, F):
    """Independent evaluation with explicit loops and inverses."""
    T, N = R.shape
    K = F.shape[1]
    X = np.column_stack([np.ones(T), F])
    B = np.linalg.inv(X.T @ X) @ X.T @ R
    E = R - X @ B
    alphas = B[0]
    sigma = np.zeros((N, N))
    for t in range(T):
        sigma += np.outer(E[t], E[t])
    sigma /= T
    mu = F.mean(axis=0)
    omega = np.zeros((K, K))
    for t in range(T):
        omega += np.outer(F[t] - mu, F[t] - mu)
    omega /= T
    quad_a = alphas @ np.linalg.inv(sigma) @ alphas
    quad_m = mu @ np.linalg.inv(omega) @ mu
    stat = (T / N) * ((T - N - K) / (T - K - 1)) * quad_a / (1 + quad_m)
    return stat, 1 - f_cdf(stat, N, T - N - K)


def simulate_panel(seed, T=120, N=6, K=3, alpha=None):
    rng = np.random.default_rng(seed)
    F = rng.normal(0.004, 0.04, size=(T, K))
    beta = rng.uniform(0.2, 1.5, size=(K, N))
    a = np.zeros(N) if alpha is None else alpha
    R = a + F @ beta + rng.normal(0, 0.02, size=(T, N))
    return R, F


class TestGrsStatistic:
    def test_matches_dense_oracle(self):
        for seed in range(5):
            R, F = simulate_panel(seed)
            res = grs_test(R, F)
            stat, p = dense_oracle(R, F)
            assert res.statistic == pytest.approx(stat, abs=1e-10)
            assert res.p_value == pytest.approx(p, abs=1e-10)

    def test_single_asset_closed_form(self):
        R, F = simulate_panel(7, N=1, K=2)
        res = grs_test(R, F)
        stat, _ = dense_oracle(R, F)
        assert res.statistic == pytest.approx(stat, abs=1e-10)

    def test_exact_factor_combination_gives_zero(self):
        rng = np.random.default_rng(1)
        F = rng.normal(0.005, 0.04, size=(100, 2))
        R = F @ np.array([[1.0, 0.5, 0.2], [0.3, 0.7, -0.1]])
        res = grs_test(R, F)
        assert res.statistic == pytest.approx(0.0, abs=1e-18)
        assert res.p_value == pytest.approx(1.0)

    def test_portfolio_reordering_invariance(self):
        R, F = simulate_panel(3)
        base = grs_test(R, F).statistic
        perm = np.random.default_rng(0).permutation(R.shape[1])
        assert grs_test(R[:, perm], F).statistic == pytest.approx(base, abs=1e-10)

    def test_factor_rescaling_invariance(self):
        R, F = simulate_panel(4)
        base = grs_test(R, F).statistic
        F2 = F.copy()
        F2[:, 1] *= 3.7
        assert grs_test(R, F2).statistic == pytest.approx(base, abs=1e-10)

    def test_too_short_sample(self):
        R, F = simulate_panel(5, T=8, N=6, K=3)
        with pytest.raises(TooShortSampleError):
            grs_test(R, F)

    def test_collinear_factors(self):
        R, F = simulate_panel(6)
        F2 = np.column_stack([F, F[:, 0]])
        with pytest.raises(SingularCovarianceError):
            grs_test(R, F2)

    def test_w_scalar_relation(self):
        R, F = simulate_panel(8)
        res = grs_test(R, F)
        N, T, K = res.n_assets, res.n_periods, res.n_factors
        assert grs_w(res) == pytest.approx(res.statistic * N * T / (T - N - K))


class TestGrsSize:
    def test_rejection_rate_near_nominal(self):
        """Zero-alpha five-factor economies: rejection at the 5% level
        stays within [3%, 7%] over 2000 simulations."""
        rejections = 0
        nsims = 2000
        for seed in range(nsims):
            R, F = simulate_panel(seed, T=600, N=20, K=5)
            rejections += grs_test(R, F).p_value < 0.05
        assert 0.03 <= rejections / nsims <= 0.07
