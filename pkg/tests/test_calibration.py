import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.stats import poisson

from jdpricer.calibration import (AnnealConfig, ReturnSeries, calibrate,
                                  merton_density, neg_log_likelihood)
from jdpricer.core import MertonParams, ParamBounds, ValidationError
from jdpricer.montecarlo import PathConfig, simulate_paths

DT = 1 / 252


def in_bounds_params():
    return st.builds(
        MertonParams,
        mu=st.floats(-1.0, 1.0),
        sigma=st.floats(0.01, 1.0),
        lam=st.floats(0.0, 5.0),
        mu_y=st.floats(-1.0, 1.0),
        sigma_y=st.floats(0.005, 0.5),
    )


class TestDensity:
    def test_zero_jump_limit_is_normal(self):
        p = MertonParams(mu=0.1, sigma=0.25, lam=0.0, mu_y=0.0, sigma_y=0.1)
        t = 1 / 12
        at_mode = merton_density(p, p.mu * t, t, k_max=10)
        assert at_mode == pytest.approx(1.0 / math.sqrt(2 * math.pi * p.sigma**2 * t),
                                        rel=1e-12)

    def test_quadrature_normalization(self, spy_params):
        p = MertonParams(mu=0.0, sigma=spy_params.sigma, lam=spy_params.lam,
                         mu_y=spy_params.mu_y, sigma_y=spy_params.sigma_y)
        total, err = quad(lambda x: merton_density(p, x, DT, 10),
                          -0.5, 0.5, limit=300, points=[0.0], epsabs=1e-10)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_even_symmetry(self):
        p = MertonParams(mu=0.0, sigma=0.2, lam=1.5, mu_y=0.0, sigma_y=0.08)
        assert merton_density(p, 0.01, DT, 10) == pytest.approx(
            merton_density(p, -0.01, DT, 10), rel=1e-13)

    def test_truncation_error_bounded_by_poisson_tail(self, spy_params):
        t = 0.5  # lam * t = 1 makes the dropped tail measurable
        for x in (-0.05, 0.0, 0.08):
            d10 = merton_density(spy_params, x, t, k_max=10)
            d15 = merton_density(spy_params, x, t, k_max=15)
            tail = poisson.sf(10, spy_params.lam * t)
            peak = 1.0 / math.sqrt(
                2 * math.pi * (spy_params.sigma**2 * t + 11 * spy_params.sigma_y**2))
            ulp = 1e-15 * max(d10, 1.0)
            assert -ulp <= d15 - d10 <= tail * peak + ulp

    @settings(max_examples=25, deadline=None)
    @given(in_bounds_params())
    def test_normalizes_over_widened_window(self, p):
        # window widened by the k_max * mu_y mixture shift so every
        # component's mass is captured
        k_max = 10
        sig_tot = math.sqrt(p.sigma**2 * DT + k_max * p.sigma_y**2)
        lo = p.mu * DT + min(0.0, k_max * p.mu_y) - 10 * sig_tot
        hi = p.mu * DT + max(0.0, k_max * p.mu_y) + 10 * sig_tot
        xs = np.linspace(lo, hi, 120_001)
        dens = merton_density(p, xs, DT, k_max)
        assert np.all(dens >= 0.0)
        total = np.trapezoid(dens, xs)
        assert total == pytest.approx(1.0, abs=1e-4)


class TestNegLogLikelihood:
    def test_closed_form_at_mode(self):
        p = MertonParams(mu=0.1, sigma=0.3, lam=0.0, mu_y=0.0, sigma_y=0.1)
        series = ReturnSeries(np.full(30, p.mu * DT), dt=DT)
        want = -30.0 * math.log(1.0 / math.sqrt(2 * math.pi * p.sigma**2 * DT))
        assert neg_log_likelihood(p, series, 10) == pytest.approx(want, rel=1e-12)

    def test_duplication_doubles(self, spy_params):
        rng = np.random.default_rng(0)
        x = rng.normal(0.0, 0.01, size=40)
        single = neg_log_likelihood(spy_params, ReturnSeries(x, DT), 10)
        double = neg_log_likelihood(spy_params, ReturnSeries(np.tile(x, 2), DT), 10)
        assert double == pytest.approx(2 * single, rel=1e-12)

    def test_true_params_beat_perturbed_on_simulated_data(self, spy_params):
        cfg = PathConfig(s0=100.0, horizon=5000 * DT, steps=5000, n_paths=1,
                         seed=21)
        series = ReturnSeries.from_prices(simulate_paths(spy_params, cfg)[0], DT)
        perturbed = MertonParams(mu=spy_params.mu, sigma=spy_params.sigma + 0.05,
                                 lam=spy_params.lam, mu_y=spy_params.mu_y,
                                 sigma_y=spy_params.sigma_y)
        assert (neg_log_likelihood(spy_params, series, 10)
                <= neg_log_likelihood(perturbed, series, 10))

    @settings(max_examples=20, deadline=None)
    @given(in_bounds_params())
    def test_finite_for_in_bounds_params(self, p):
        rng = np.random.default_rng(4)
        series = ReturnSeries(rng.normal(0, 0.02, size=64), DT)
        assert math.isfinite(neg_log_likelihood(p, series, 10))

    def test_series_validation(self):
        with pytest.raises(ValidationError):
            ReturnSeries(np.zeros(10), DT)          # too short
        with pytest.raises(ValidationError):
            ReturnSeries(np.zeros(40), 0.0)         # bad dt
        with pytest.raises(ValidationError):
            ReturnSeries(np.full(40, np.inf), DT)   # non-finite


class TestCalibrate:
    def test_collapsed_bounds_return_center(self, spy_params):
        eps = 5e-7
        bounds = ParamBounds(
            mu=(spy_params.mu - eps, spy_params.mu + eps),
            sigma=(spy_params.sigma - eps, spy_params.sigma + eps),
            lam=(spy_params.lam - eps, spy_params.lam + eps),
            mu_y=(spy_params.mu_y - eps, spy_params.mu_y + eps),
            sigma_y=(spy_params.sigma_y - eps, spy_params.sigma_y + eps))
        rng = np.random.default_rng(1)
        series = ReturnSeries(rng.normal(0, 0.012, size=200), DT)
        fitted = calibrate(series, bounds, AnnealConfig(max_iters=5, seed=2))
        assert fitted.sigma == pytest.approx(spy_params.sigma, abs=2 * eps)
        assert fitted.lam == pytest.approx(spy_params.lam, abs=2 * eps)
        assert bounds.contains(fitted)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(3)
        series = ReturnSeries(rng.normal(0.0005, 0.01, size=300), DT)
        cfg = AnnealConfig(max_iters=12, seed=77)
        a = calibrate(series, ParamBounds(), cfg)
        b = calibrate(series, ParamBounds(), cfg)
        assert (a.mu, a.sigma, a.lam, a.mu_y, a.sigma_y) == \
            (b.mu, b.sigma, b.lam, b.mu_y, b.sigma_y)

    def test_zero_variance_series_rejected(self):
        series = ReturnSeries(np.full(60, 0.001), DT)
        with pytest.raises(ValidationError):
            calibrate(series, ParamBounds(), AnnealConfig(max_iters=5))

    def test_recovers_simulated_parameters(self, spy_params):
        cfg = PathConfig(s0=100.0, horizon=4000 * DT, steps=4000, n_paths=1,
                         seed=6)
        series = ReturnSeries.from_prices(simulate_paths(spy_params, cfg)[0], DT)
        fitted = calibrate(series, ParamBounds(),
                           AnnealConfig(max_iters=60, seed=8))
        assert ParamBounds().contains(fitted)
        assert fitted.sigma == pytest.approx(spy_params.sigma, abs=0.03)
        assert fitted.lam == pytest.approx(spy_params.lam, abs=1.5)
