import math

import numpy as np
import pytest
from scipy.stats import kurtosis

from jdpricer.core import CALL, EUROPEAN, PUT, MertonParams, OptionSpec, ValidationError
from jdpricer.montecarlo import (PathConfig, log_return_histogram,
                                 mc_price_european, simulate_paths)

from conftest import bs_price


class TestSimulatePaths:
    def test_deterministic_limit(self):
        p = MertonParams(mu=0.08, sigma=1e-12, lam=0.0, mu_y=0.0, sigma_y=0.01)
        cfg = PathConfig(s0=50.0, horizon=2.0, steps=100, n_paths=3, seed=1)
        paths = simulate_paths(p, cfg)
        t = np.linspace(0, 2.0, 101)
        expected = 50.0 * np.exp(0.08 * t)
        assert np.allclose(paths, expected[None, :], rtol=1e-6)

    def test_same_seed_identical(self, spy_params):
        cfg = PathConfig(s0=100.0, horizon=1.0, steps=52, n_paths=500, seed=7)
        a = simulate_paths(spy_params, cfg)
        b = simulate_paths(spy_params, cfg)
        assert np.array_equal(a, b)

    def test_prices_strictly_positive(self, spy_params):
        cfg = PathConfig(s0=100.0, horizon=5.0, steps=252, n_paths=200, seed=3)
        assert np.all(simulate_paths(spy_params, cfg) > 0.0)

    def test_risk_neutral_martingale(self, spy_params):
        cfg = PathConfig(s0=100.0, horizon=1.0, steps=4, n_paths=100_000,
                         seed=11, measure="risk_neutral", rate=0.05)
        terminal = simulate_paths(spy_params, cfg)[:, -1]
        disc = math.exp(-0.05) * terminal
        stderr = disc.std(ddof=1) / math.sqrt(len(disc))
        assert abs(disc.mean() - 100.0) <= 4 * stderr

    def test_log_return_moments(self, spy_params):
        dt = 1 / 252
        cfg = PathConfig(s0=100.0, horizon=dt * 252, steps=252,
                         n_paths=2000, seed=5)
        rets = np.diff(np.log(simulate_paths(spy_params, cfg)), axis=1).ravel()
        k_bar = spy_params.jump_mean_relative
        mean_th = (spy_params.mu - spy_params.lam * k_bar
                   - 0.5 * spy_params.sigma**2
                   + spy_params.lam * spy_params.mu_y) * dt
        var_th = (spy_params.sigma**2 + spy_params.lam
                  * (spy_params.mu_y**2 + spy_params.sigma_y**2)) * dt
        n = rets.size
        mean_se = math.sqrt(var_th / n)
        # stderr of the sample variance via the fourth moment bound
        var_se = var_th * math.sqrt(2.0 / (n - 1)) * 3
        assert abs(rets.mean() - mean_th) <= 4 * mean_se
        assert abs(rets.var() - var_th) <= 4 * var_se

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            PathConfig(s0=-1.0, horizon=1.0, steps=10, n_paths=10)
        with pytest.raises(ValidationError):
            PathConfig(s0=1.0, horizon=1.0, steps=0, n_paths=10)
        with pytest.raises(ValidationError):
            PathConfig(s0=1.0, horizon=1.0, steps=10, n_paths=10,
                       measure="martian")


class TestMcPrice:
    def test_black_scholes_limit(self, bs_params):
        spec = OptionSpec(100, 100, 1.0, 0.05, CALL, EUROPEAN)
        price, stderr = mc_price_european(bs_params, spec, n_paths=1_000_000,
                                          seed=13)
        assert abs(price - bs_price(100, 100, 1, 0.05, 0.2, "C")) <= 3 * stderr

    def test_deep_otm_call_worthless(self, bs_params):
        p = MertonParams(mu=0.0, sigma=0.1, lam=0.0, mu_y=0.0, sigma_y=0.01)
        spec = OptionSpec(100, 1000, 0.25, 0.02, CALL, EUROPEAN)
        price, stderr = mc_price_european(p, spec, n_paths=50_000, seed=17)
        assert price <= 3 * stderr

    def test_tiny_strike_put_worthless(self, bs_params):
        spec = OptionSpec(100, 1e-6, 0.5, 0.02, PUT, EUROPEAN)
        price, _ = mc_price_european(bs_params, spec, n_paths=10_000, seed=19)
        assert price == 0.0

    def test_american_rejected(self, bs_params):
        spec = OptionSpec(100, 100, 1.0, 0.05, CALL, "american")
        with pytest.raises(ValidationError):
            mc_price_european(bs_params, spec, n_paths=100)


class TestHistogram:
    def test_constant_paths_single_bin(self):
        paths = np.full((4, 11), 42.0)
        edges, freq = log_return_histogram(paths, bins=10)
        assert np.count_nonzero(freq) == 1

    def test_density_normalization(self, spy_params):
        cfg = PathConfig(s0=100.0, horizon=1.0, steps=252, n_paths=50, seed=23)
        paths = simulate_paths(spy_params, cfg)
        edges, freq = log_return_histogram(paths, bins=60)
        assert np.sum(freq * np.diff(edges)) == pytest.approx(1.0, abs=1e-9)

    def test_daily_returns_leptokurtic(self, spy_params):
        cfg = PathConfig(s0=100.0, horizon=1.0, steps=252, n_paths=200, seed=29)
        rets = np.diff(np.log(simulate_paths(spy_params, cfg)), axis=1).ravel()
        assert kurtosis(rets, fisher=True) > 0.0

    def test_bins_validation(self):
        with pytest.raises(ValidationError):
            log_return_histogram(np.ones((2, 3)), bins=1)
