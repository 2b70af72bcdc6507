"""Jump-diffusion option pricing toolkit: Merton calibration, analytic /
Monte Carlo / PIDE pricers, synthetic dataset generation, and a hybrid
physics-informed neural pricing model."""

from .core import (CALL, PUT, EUROPEAN, AMERICAN, MertonParams, ParamBounds,
                   OptionSpec, QuoteDataset, Metrics, compute_metrics, payoff)

__version__ = "0.1.0"

__all__ = [
    "CALL", "PUT", "EUROPEAN", "AMERICAN",
    "MertonParams", "ParamBounds", "OptionSpec", "QuoteDataset",
    "Metrics", "compute_metrics", "payoff", "__version__",
]
