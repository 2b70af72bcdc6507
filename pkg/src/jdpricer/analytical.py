"""Closed-form European option pricing under Merton jump diffusion.

Two series variants are provided. ``price_european_paper`` keeps the spot
term as S*exp(n*mu_y); ``price_european_canonical`` uses the jump-adjusted
spot S*exp(n*(mu_y + sigma_y^2/2)) with per-term cost of carry r - lam*k,
which is the textbook Merton series and the one consistent with the PIDE
generator. Both reduce to Black-Scholes when lam = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr

from .core import CALL, EUROPEAN, PUT, MertonParams, OptionSpec, ValidationError, payoff

DEFAULT_N_TERMS = 40


def norm_cdf(x):
    """Standard normal CDF (erf-based, |error| < 1e-15)."""
    return ndtr(x)


def risk_neutral_drift(params: MertonParams, rate: float) -> float:
    """Drift under the pricing measure: r minus the jump compensator."""
    return rate - params.lam * params.jump_mean_relative


def _poisson_weights(lam_t: np.ndarray, n_terms: int) -> np.ndarray:
    """exp(-lt) * (lt)^n / n! for n = 0..n_terms, log-space to dodge n!."""
    lam_t = np.atleast_1d(np.asarray(lam_t, dtype=float))
    n = np.arange(n_terms + 1, dtype=float)
    # floor keeps lam_t = 0 exact: n = 0 gives weight 1, n >= 1 underflows to 0
    log_lt = np.log(np.maximum(lam_t, 1e-300))
    log_w = -lam_t[:, None] + n[None, :] * log_lt[:, None] - gammaln(n + 1)[None, :]
    return np.exp(log_w)


def black_scholes(spot, strike, tau, rate, sigma, kind: str, carry=None):
    """Generalized Black-Scholes with cost of carry ``carry`` (default r)."""
    spot = np.asarray(spot, dtype=float)
    strike = np.asarray(strike, dtype=float)
    tau = np.asarray(tau, dtype=float)
    b = rate if carry is None else carry
    sig_rt = sigma * np.sqrt(tau)
    d1 = (np.log(spot / strike) + (b + 0.5 * sigma**2) * tau) / sig_rt
    d2 = d1 - sig_rt
    fwd = spot * np.exp((b - rate) * tau)
    disc_k = strike * np.exp(-rate * tau)
    if kind == CALL:
        return (fwd * ndtr(d1) - disc_k * ndtr(d2))[()]
    return (disc_k * ndtr(-d2) - fwd * ndtr(-d1))[()]


def paper_series(spot, strike, tau, rate, sigma, lam, mu_y, sigma_y,
                 kind: str, n_terms: int = DEFAULT_N_TERMS) -> np.ndarray:
    """Vectorized paper-variant series over row arrays (tau > 0 required)."""
    spot = np.atleast_1d(np.asarray(spot, dtype=float))
    strike = np.atleast_1d(np.asarray(strike, dtype=float))
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    rate = np.broadcast_to(np.asarray(rate, dtype=float), spot.shape)
    k_bar = math.exp(mu_y + 0.5 * sigma_y**2) - 1.0

    n = np.arange(n_terms + 1, dtype=float)[None, :]
    w = _poisson_weights(lam * tau, n_terms)
    tau_c = tau[:, None]
    sigma_n = np.sqrt(sigma**2 + n * sigma_y**2 / tau_c)
    sig_rt = sigma_n * np.sqrt(tau_c)
    drift = (rate[:, None] - lam * k_bar + n * mu_y + 0.5 * sigma_n**2) * tau_c
    d1 = (np.log(spot / strike)[:, None] + drift) / sig_rt
    d2 = d1 - sig_rt
    spot_term = spot[:, None] * np.exp(n * mu_y)
    disc_k = (strike * np.exp(-rate * tau))[:, None]
    if kind == CALL:
        terms = spot_term * ndtr(d1) - disc_k * ndtr(d2)
    elif kind == PUT:
        terms = disc_k * ndtr(-d2) - spot_term * ndtr(-d1)
    else:
        raise ValidationError(f"kind must be 'C' or 'P', got {kind!r}")
    return np.sum(w * terms, axis=1)


def canonical_series(spot, strike, tau, rate, sigma, lam, mu_y, sigma_y,
                     kind: str, n_terms: int = DEFAULT_N_TERMS) -> np.ndarray:
    """Vectorized canonical Merton series over row arrays (tau > 0)."""
    spot = np.atleast_1d(np.asarray(spot, dtype=float))
    strike = np.atleast_1d(np.asarray(strike, dtype=float))
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    rate = np.broadcast_to(np.asarray(rate, dtype=float), spot.shape)
    k_bar = math.exp(mu_y + 0.5 * sigma_y**2) - 1.0

    n = np.arange(n_terms + 1, dtype=float)[None, :]
    w = _poisson_weights(lam * tau, n_terms)
    tau_c = tau[:, None]
    sigma_n = np.sqrt(sigma**2 + n * sigma_y**2 / tau_c)
    sig_rt = sigma_n * np.sqrt(tau_c)
    carry = rate[:, None] - lam * k_bar
    s0n = spot[:, None] * np.exp(n * (mu_y + 0.5 * sigma_y**2))
    d1 = (np.log(s0n / strike[:, None]) + (carry + 0.5 * sigma_n**2) * tau_c) / sig_rt
    d2 = d1 - sig_rt
    fwd = s0n * np.exp((carry - rate[:, None]) * tau_c)
    disc_k = (strike * np.exp(-rate * tau))[:, None]
    if kind == CALL:
        terms = fwd * ndtr(d1) - disc_k * ndtr(d2)
    elif kind == PUT:
        terms = disc_k * ndtr(-d2) - fwd * ndtr(-d1)
    else:
        raise ValidationError(f"kind must be 'C' or 'P', got {kind!r}")
    return np.sum(w * terms, axis=1)


def _check_european(spec: OptionSpec, n_terms: int):
    if spec.style != EUROPEAN:
        raise ValidationError("series pricers handle European specs only")
    if n_terms < 1:
        raise ValidationError("n_terms must be >= 1")


def price_european_paper(params: MertonParams, spec: OptionSpec,
                         n_terms: int = DEFAULT_N_TERMS) -> float:
    """Truncated series with spot term S*exp(n*mu_y), exactly as stated."""
    _check_european(spec, n_terms)
    if spec.tau == 0.0:
        return float(payoff(spec, spec.spot))
    return float(paper_series(
        spec.spot, spec.strike, spec.tau, spec.rate,
        params.sigma, params.lam, params.mu_y, params.sigma_y,
        spec.kind, n_terms)[0])


def price_european_canonical(params: MertonParams, spec: OptionSpec,
                             n_terms: int = DEFAULT_N_TERMS) -> float:
    """Poisson-weighted Black-Scholes series on the jump-adjusted spot."""
    _check_european(spec, n_terms)
    if spec.tau == 0.0:
        return float(payoff(spec, spec.spot))
    return float(canonical_series(
        spec.spot, spec.strike, spec.tau, spec.rate,
        params.sigma, params.lam, params.mu_y, params.sigma_y,
        spec.kind, n_terms)[0])


@dataclass(frozen=True)
class SeriesTermParams:
    """Per-term quantities of the pricing series for jump count ``n``."""

    n: int
    sigma_n: float
    k_bar: float
    d1_n: float
    d2_n: float
    s0_n: float


def series_term(params: MertonParams, spec: OptionSpec, n: int) -> SeriesTermParams:
    """Inspect the n-th term of the canonical series (tau > 0)."""
    if spec.tau <= 0:
        raise ValidationError("series terms require tau > 0")
    k_bar = params.jump_mean_relative
    sigma_n = math.sqrt(params.sigma**2 + n * params.sigma_y**2 / spec.tau)
    s0_n = spec.spot * math.exp(n * (params.mu_y + 0.5 * params.sigma_y**2))
    carry = spec.rate - params.lam * k_bar
    sig_rt = sigma_n * math.sqrt(spec.tau)
    d1 = (math.log(s0_n / spec.strike) + (carry + 0.5 * sigma_n**2) * spec.tau) / sig_rt
    return SeriesTermParams(n=n, sigma_n=sigma_n, k_bar=k_bar,
                            d1_n=d1, d2_n=d1 - sig_rt, s0_n=s0_n)
