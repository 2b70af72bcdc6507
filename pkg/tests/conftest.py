import math

import numpy as np
import pytest

from jdpricer.core import MertonParams


@pytest.fixture(scope="session")
def spy_params() -> MertonParams:
    """Calibrated SPY-scale parameter set used throughout the tests."""
    return MertonParams(mu=0.179, sigma=0.143, lam=2.0, mu_y=-0.012,
                        sigma_y=0.042)


@pytest.fixture(scope="session")
def bs_params() -> MertonParams:
    """Jump-free parameters: every pricer must reduce to Black-Scholes."""
    return MertonParams(mu=0.05, sigma=0.2, lam=0.0, mu_y=-0.01, sigma_y=0.05)


def bs_price(spot, strike, tau, rate, sigma, kind):
    """Independent Black-Scholes oracle (math.erf, no package code)."""
    if tau == 0:
        intrinsic = spot - strike if kind == "C" else strike - spot
        return max(intrinsic, 0.0)
    d1 = ((math.log(spot / strike) + (rate + 0.5 * sigma**2) * tau)
          / (sigma * math.sqrt(tau)))
    d2 = d1 - sigma * math.sqrt(tau)

    def cdf(x):
        return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))

    if kind == "C":
        return spot * cdf(d1) - strike * math.exp(-rate * tau) * cdf(d2)
    return strike * math.exp(-rate * tau) * cdf(-d2) - spot * cdf(-d1)


def random_specs(n, rng, style="european"):
    """Random in-range option specs for property sweeps."""
    from jdpricer.core import OptionSpec
    specs = []
    for _ in range(n):
        spot = rng.uniform(50, 400)
        specs.append(OptionSpec(
            spot=spot,
            strike=spot * rng.uniform(0.6, 1.4),
            tau=rng.uniform(0.05, 2.0),
            rate=rng.uniform(0.0, 0.08),
            kind="C" if rng.random() < 0.5 else "P",
            style=style))
    return specs
