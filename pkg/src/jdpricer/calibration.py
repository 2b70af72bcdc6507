"""Maximum-likelihood calibration of Merton parameters from log returns.

The observation density is a Poisson mixture of normals truncated at
``k_max`` jumps per interval; the negative log likelihood is minimized
globally with scipy's dual annealing (generalized simulated annealing with
a Tsallis visiting distribution), optionally refined by a local search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import dual_annealing
from scipy.special import gammaln

from .core import MertonParams, ParamBounds, ValidationError

DENSITY_FLOOR = 1e-300
# stop a run early once successive best objectives improve by less than this
IMPROVEMENT_TOL = 1e-8


@dataclass(frozen=True)
class ReturnSeries:
    """Log returns observed at a fixed interval ``dt`` (in years)."""

    x: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).ravel())
        if self.dt <= 0:
            raise ValidationError("observation interval dt must be positive")
        if not np.all(np.isfinite(self.x)):
            raise ValidationError("returns must be finite")
        if self.x.size < 30:
            raise ValidationError(f"need at least 30 returns, got {self.x.size}")

    @classmethod
    def from_prices(cls, prices, dt: float) -> "ReturnSeries":
        prices = np.asarray(prices, dtype=float).ravel()
        if np.any(prices <= 0):
            raise ValidationError("prices must be positive to take log returns")
        return cls(x=np.diff(np.log(prices)), dt=dt)


@dataclass(frozen=True)
class AnnealConfig:
    max_iters: int = 200
    seed: int = 42
    initial_temp: float = 5230.0
    visiting_param: float = 2.62
    acceptance_param: float = -5.0
    restart_temp_ratio: float = 2e-5
    local_search: bool = True
    truncation_k: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.truncation_k < 1:
            raise ValidationError("truncation_k must be >= 1")
        if not 0 < self.restart_temp_ratio < 1:
            raise ValidationError("restart_temp_ratio must lie in (0, 1)")


def _mixture_density(mu, sigma, lam, mu_y, sigma_y, x, t, k_max):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(k_max + 1, dtype=float)
    lam_t = lam * t
    log_w = -lam_t + k * np.log(max(lam_t, 1e-300)) - gammaln(k + 1)
    var = sigma**2 * t + k * sigma_y**2
    mean = mu * t + k * mu_y
    z = (x[:, None] - mean[None, :]) ** 2 / (2.0 * var[None, :])
    log_pdf = -z - 0.5 * np.log(2.0 * math.pi * var)[None, :]
    return np.exp(log_w[None, :] + log_pdf).sum(axis=1)


def merton_density(params: MertonParams, x, t: float, k_max: int) -> float | np.ndarray:
    """Poisson-mixture density of a log return over an interval of ``t``
    years, truncated at ``k_max`` jumps. Poisson weights accumulate in log
    space so large k never overflows the factorial."""
    if t <= 0:
        raise ValidationError("t must be positive")
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise ValidationError("x must be finite")
    dens = _mixture_density(params.mu, params.sigma, params.lam,
                            params.mu_y, params.sigma_y, xs, t, k_max)
    return dens if np.ndim(x) else float(dens[0])


def neg_log_likelihood(params: MertonParams, series: ReturnSeries,
                       k_max: int) -> float:
    """Objective for calibration: -sum(log density) with the density floored
    at 1e-300 so the annealer always sees a finite value."""
    dens = merton_density(params, series.x, series.dt, k_max)
    return float(-np.sum(np.log(np.maximum(dens, DENSITY_FLOOR))))


def calibrate(series: ReturnSeries, bounds: ParamBounds | None = None,
              cfg: AnnealConfig | None = None) -> MertonParams:
    """Fit MertonParams to a return series by global MLE.

    Deterministic for a fixed config seed; the result always lies inside
    the bounds box.
    """
    bounds = bounds or ParamBounds()
    cfg = cfg or AnnealConfig()
    if float(np.var(series.x)) == 0.0:
        raise ValidationError("return series has zero variance; cannot calibrate")

    x, t, k_max = series.x, series.dt, cfg.truncation_k

    def objective(v):
        mu, sigma, lam, mu_y, sigma_y = v
        dens = _mixture_density(mu, sigma, lam, mu_y, sigma_y, x, t, k_max)
        return float(-np.sum(np.log(np.maximum(dens, DENSITY_FLOOR))))

    best = {"f": math.inf, "calls": 0}

    def callback(xk, f, context):
        best["calls"] += 1
        improved = best["f"] - f
        best["f"] = min(best["f"], f)
        # require a couple of minima before the improvement rule may fire
        return best["calls"] > 2 and 0 <= improved < IMPROVEMENT_TOL

    result = dual_annealing(
        objective,
        bounds=bounds.as_list(),
        maxiter=cfg.max_iters,
        initial_temp=cfg.initial_temp,
        visit=cfg.visiting_param,
        accept=cfg.acceptance_param,
        restart_temp_ratio=cfg.restart_temp_ratio,
        no_local_search=not cfg.local_search,
        rng=cfg.seed,
        callback=callback,
    )
    mu, sigma, lam, mu_y, sigma_y = bounds.clip(result.x)
    return MertonParams(mu=float(mu), sigma=float(sigma), lam=float(lam),
                        mu_y=float(mu_y), sigma_y=float(sigma_y))
