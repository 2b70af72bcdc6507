import math

import numpy as np
import pytest

from jdpricer.analytical import (black_scholes, canonical_series,
                                 price_european_canonical,
                                 price_european_paper, risk_neutral_drift,
                                 series_term)
from jdpricer.core import CALL, EUROPEAN, PUT, MertonParams, OptionSpec
from jdpricer.montecarlo import mc_price_european, simulate_paths, PathConfig

from conftest import bs_price, random_specs


class TestRiskNeutralDrift:
    def test_no_jumps(self, bs_params):
        assert risk_neutral_drift(bs_params, 0.05) == pytest.approx(0.05)

    def test_direct_arithmetic(self, spy_params):
        got = risk_neutral_drift(spy_params, 0.05)
        want = 0.05 - 2.0 * (math.exp(-0.012 + 0.5 * 0.042**2) - 1.0)
        assert got == pytest.approx(want, abs=1e-15)
        assert got == pytest.approx(0.05 + 0.02210, abs=5e-5)

    def test_zero_mean_jump(self):
        p = MertonParams(mu=0.0, sigma=0.2, lam=3.0, mu_y=-0.5 * 0.1**2,
                         sigma_y=0.1)
        assert risk_neutral_drift(p, 0.07) == pytest.approx(0.07, abs=1e-15)


class TestBlackScholesLimit:
    def test_frozen_call_value(self, bs_params):
        spec = OptionSpec(100, 100, 1.0, 0.05, CALL, EUROPEAN)
        assert price_european_paper(bs_params, spec) == pytest.approx(
            10.450584, abs=5e-7)
        assert price_european_canonical(bs_params, spec) == pytest.approx(
            10.450584, abs=5e-7)

    def test_frozen_put_value(self, bs_params):
        spec = OptionSpec(100, 100, 1.0, 0.05, PUT, EUROPEAN)
        assert price_european_paper(bs_params, spec) == pytest.approx(
            5.573526, abs=5e-7)

    def test_expiry_returns_payoff(self, bs_params):
        spec = OptionSpec(120, 100, 0.0, 0.05, CALL, EUROPEAN)
        assert price_european_paper(bs_params, spec) == 20.0
        assert price_european_canonical(bs_params, spec) == 20.0

    def test_both_variants_match_bs_on_random_specs(self):
        rng = np.random.default_rng(1)
        for spec in random_specs(40, rng):
            sigma = rng.uniform(0.05, 0.6)
            p = MertonParams(mu=0.0, sigma=sigma, lam=0.0, mu_y=0.3,
                             sigma_y=0.2)
            oracle = bs_price(spec.spot, spec.strike, spec.tau, spec.rate,
                              sigma, spec.kind)
            assert price_european_paper(p, spec) == pytest.approx(oracle, abs=1e-10)
            assert price_european_canonical(p, spec) == pytest.approx(oracle, abs=1e-10)


class TestMertonSeries:
    def test_variants_coincide_without_jumps(self, bs_params):
        spec = OptionSpec(110, 95, 0.7, 0.02, CALL, EUROPEAN)
        assert price_european_paper(bs_params, spec) == pytest.approx(
            price_european_canonical(bs_params, spec), abs=1e-12)

    def test_canonical_against_monte_carlo(self, spy_params):
        spec = OptionSpec(100, 100, 0.5, 0.03, CALL, EUROPEAN)
        series = price_european_canonical(spy_params, spec)
        mc, stderr = mc_price_european(spy_params, spec, n_paths=400_000, seed=9)
        assert abs(series - mc) < 3 * stderr

    def test_truncation_tail(self, spy_params):
        spec = OptionSpec(100, 100, 1.0, 0.03, CALL, EUROPEAN)  # lam*T = 2
        p60 = price_european_canonical(spy_params, spec, n_terms=60)
        p61 = price_european_canonical(spy_params, spec, n_terms=61)
        assert abs(p61 - p60) < 1e-12

    def test_put_call_parity_of_canonical(self, spy_params):
        # exact parity implies the discounted forward is the spot
        call = OptionSpec(120, 100, 0.75, 0.04, CALL, EUROPEAN)
        put = OptionSpec(120, 100, 0.75, 0.04, PUT, EUROPEAN)
        c = price_european_canonical(spy_params, call)
        p = price_european_canonical(spy_params, put)
        fwd = 120 - 100 * math.exp(-0.04 * 0.75)
        assert c - p == pytest.approx(fwd, abs=1e-10)

    def test_martingale_against_monte_carlo(self, spy_params):
        # e^{-rT} E[S_T] = S under the simulated pricing measure
        cfg = PathConfig(s0=100.0, horizon=0.5, steps=1, n_paths=200_000,
                         seed=33, measure="risk_neutral", rate=0.03)
        terminal = simulate_paths(spy_params, cfg)[:, -1]
        disc = math.exp(-0.03 * 0.5) * terminal
        stderr = disc.std(ddof=1) / math.sqrt(len(disc))
        assert abs(disc.mean() - 100.0) < 4 * stderr

    def test_monotone_in_sigma(self, spy_params):
        spec = OptionSpec(100, 105, 0.5, 0.03, CALL, EUROPEAN)
        prices = []
        for sigma in np.linspace(0.05, 0.6, 8):
            p = MertonParams(mu=0.0, sigma=float(sigma), lam=spy_params.lam,
                             mu_y=spy_params.mu_y, sigma_y=spy_params.sigma_y)
            prices.append(price_european_canonical(p, spec))
        assert np.all(np.diff(prices) >= -1e-12)

    def test_price_bounds(self, spy_params):
        rng = np.random.default_rng(7)
        for spec in random_specs(30, rng):
            v = price_european_canonical(spy_params, spec)
            assert v >= -1e-12
            if spec.kind == CALL:
                assert v <= spec.spot + 1e-9
            else:
                assert v <= spec.strike * math.exp(-spec.rate * spec.tau) + 1e-9

    def test_truncation_increment_bound(self, spy_params):
        # adding term n+1 moves the paper-variant price by at most the
        # Poisson weight times max(S e^{(n+1)(mu_y + sigma_y^2/2)}, K)
        spec = OptionSpec(100, 100, 1.0, 0.03, CALL, EUROPEAN)
        lam_t = spy_params.lam * spec.tau
        for n in range(1, 20):
            lo = price_european_paper(spy_params, spec, n_terms=n)
            hi = price_european_paper(spy_params, spec, n_terms=n + 1)
            w = math.exp(-lam_t) * lam_t**(n + 1) / math.factorial(n + 1)
            shift = (n + 1) * (spy_params.mu_y + 0.5 * spy_params.sigma_y**2)
            bound = w * max(spec.spot * math.exp(shift), spec.strike)
            assert abs(hi - lo) <= bound * (1 + 1e-12)

    def test_series_term_invariants(self, spy_params):
        spec = OptionSpec(100, 100, 0.5, 0.03, CALL, EUROPEAN)
        for n in (0, 1, 5):
            term = series_term(spy_params, spec, n)
            assert term.sigma_n >= spy_params.sigma
            assert term.sigma_n**2 == pytest.approx(
                spy_params.sigma**2 + n * spy_params.sigma_y**2 / spec.tau)
            assert term.d2_n == pytest.approx(
                term.d1_n - term.sigma_n * math.sqrt(spec.tau))

    def test_vectorized_matches_scalar(self, spy_params):
        rng = np.random.default_rng(2)
        specs = random_specs(10, rng)
        spots = np.array([s.spot for s in specs])
        strikes = np.array([s.strike for s in specs])
        taus = np.array([s.tau for s in specs])
        rates = np.array([s.rate for s in specs])
        vec = canonical_series(spots, strikes, taus, rates, spy_params.sigma,
                               spy_params.lam, spy_params.mu_y,
                               spy_params.sigma_y, CALL)
        for i, s in enumerate(specs):
            call = OptionSpec(s.spot, s.strike, s.tau, s.rate, CALL, EUROPEAN)
            assert vec[i] == pytest.approx(
                price_european_canonical(spy_params, call), abs=1e-12)


def test_generalized_black_scholes_carry():
    # with carry = r it is plain Black-Scholes
    got = black_scholes(100.0, 95.0, 0.5, 0.04, 0.25, CALL)
    assert got == pytest.approx(bs_price(100, 95, 0.5, 0.04, 0.25, "C"), abs=1e-12)
