"""Merton jump-diffusion path simulation and Monte Carlo pricing.

Per step of width dt the log-price increment is

    (mu_eff - lam*k - sigma^2/2)*dt + sigma*sqrt(dt)*Z + sum_{j<=N} ln Y_j

with N ~ Poisson(lam*dt) and ln Y ~ Normal(mu_y, sigma_y^2). Under the
real-world measure mu_eff is the calibrated drift; under the risk-neutral
measure mu_eff = r, so discounted prices are martingales. Poisson counts
are sampled exactly (multiple jumps per step possible) and the jump sum is
drawn from its exact Normal(N*mu_y, N*sigma_y^2) conditional law.

RNG is numpy's PCG64; block b of paths uses the child seed spawned from
(seed, b) so results are reproducible regardless of how blocks are run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CALL, EUROPEAN, MertonParams, OptionSpec, ValidationError, payoff

RNG_NAME = "pcg64"
_BLOCK = 1 << 16  # paths per RNG block


@dataclass(frozen=True)
class PathConfig:
    s0: float
    horizon: float
    steps: int
    n_paths: int
    seed: int = 42
    measure: str = "real"       # "real" or "risk_neutral"
    rate: float = 0.0           # used by the risk-neutral measure

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValidationError("s0 must be positive")
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if self.steps < 1 or self.n_paths < 1:
            raise ValidationError("steps and n_paths must be >= 1")
        if self.measure not in ("real", "risk_neutral"):
            raise ValidationError(f"unknown measure {self.measure!r}")


def _effective_drift(params: MertonParams, cfg: PathConfig) -> float:
    return params.mu if cfg.measure == "real" else cfg.rate


def simulate_paths(params: MertonParams, cfg: PathConfig) -> np.ndarray:
    """Simulate price paths; returns [n_paths, steps+1] with column 0 = s0."""
    dt = cfg.horizon / cfg.steps
    k_bar = params.jump_mean_relative
    drift = (_effective_drift(params, cfg) - params.lam * k_bar
             - 0.5 * params.sigma**2) * dt
    sig_dt = params.sigma * math.sqrt(dt)
    lam_dt = params.lam * dt

    n_blocks = (cfg.n_paths + _BLOCK - 1) // _BLOCK
    children = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    out = np.empty((cfg.n_paths, cfg.steps + 1))
    out[:, 0] = cfg.s0
    for b in range(n_blocks):
        lo, hi = b * _BLOCK, min((b + 1) * _BLOCK, cfg.n_paths)
        rng = np.random.default_rng(children[b])
        shape = (hi - lo, cfg.steps)
        inc = drift + sig_dt * rng.standard_normal(shape)
        if params.lam > 0:
            counts = rng.poisson(lam_dt, size=shape)
            z = rng.standard_normal(shape)
            inc = inc + np.where(
                counts > 0,
                counts * params.mu_y + np.sqrt(counts) * params.sigma_y * z,
                0.0)
        out[lo:hi, 1:] = cfg.s0 * np.exp(np.cumsum(inc, axis=1))
    return out


def mc_price_european(params: MertonParams, spec: OptionSpec,
                      n_paths: int, seed: int = 42) -> tuple[float, float]:
    """Discounted mean payoff under the risk-neutral measure, with its
    standard error. Terminal prices are simulated in a single exact step."""
    if spec.style != EUROPEAN:
        raise ValidationError("mc_price_european handles European specs only")
    if spec.tau <= 0:
        raise ValidationError("mc pricing requires tau > 0")
    cfg = PathConfig(s0=spec.spot, horizon=spec.tau, steps=1, n_paths=n_paths,
                     seed=seed, measure="risk_neutral", rate=spec.rate)
    terminal = simulate_paths(params, cfg)[:, -1]
    disc = math.exp(-spec.rate * spec.tau) * payoff(spec, terminal)
    stderr = float(np.std(disc, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("inf")
    return float(np.mean(disc)), stderr


def log_return_histogram(paths: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Density histogram of per-step log returns pooled across paths."""
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    rets = np.diff(np.log(np.asarray(paths, dtype=float)), axis=1).ravel()
    freq, edges = np.histogram(rets, bins=bins, density=True)
    return edges, freq
