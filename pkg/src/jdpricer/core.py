"""Shared domain types (model parameters, option specs, quote datasets)
and the evaluation metrics used across the package.

Conventions: all monetary quantities are plain floats in currency units,
time is an abstract year fraction supplied by the caller, rates and the
jump intensity are per year.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

CALL = "C"
PUT = "P"
EUROPEAN = "european"
AMERICAN = "american"

SPLITS = ("train", "val", "test")

QUOTE_CSV_COLUMNS = ("underlying", "strike", "tau", "rate", "kind", "price")


class ValidationError(ValueError):
    """Raised when a domain object violates its invariants."""


@dataclass(frozen=True)
class MertonParams:
    """Jump-diffusion state: drift, diffusion vol, jump intensity and the
    mean/std of the lognormal jump sizes (in log space)."""

    mu: float
    sigma: float
    lam: float
    mu_y: float
    sigma_y: float

    def __post_init__(self):
        vals = (self.mu, self.sigma, self.lam, self.mu_y, self.sigma_y)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite parameter in {vals}")
        if self.sigma <= 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.sigma_y <= 0:
            raise ValidationError(f"sigma_y must be positive, got {self.sigma_y}")
        if self.lam < 0:
            raise ValidationError(f"lambda must be nonnegative, got {self.lam}")

    @property
    def jump_mean_relative(self) -> float:
        """Expected relative jump size ``E[Y - 1]``."""
        return math.exp(self.mu_y + 0.5 * self.sigma_y**2) - 1.0

    def to_json(self) -> str:
        return json.dumps(
            {"mu": self.mu, "sigma": self.sigma, "lambda": self.lam,
             "mu_y": self.mu_y, "sigma_y": self.sigma_y}
        )

    @classmethod
    def from_json(cls, text: str) -> "MertonParams":
        d = json.loads(text)
        return cls(mu=d["mu"], sigma=d["sigma"], lam=d["lambda"],
                   mu_y=d["mu_y"], sigma_y=d["sigma_y"])


@dataclass(frozen=True)
class ParamBounds:
    """Box bounds for the five MertonParams fields, in declaration order."""

    mu: tuple[float, float] = (-1.0, 1.0)
    sigma: tuple[float, float] = (0.01, 1.0)
    lam: tuple[float, float] = (0.0, 5.0)
    mu_y: tuple[float, float] = (-1.0, 1.0)
    sigma_y: tuple[float, float] = (0.005, 0.5)

    def __post_init__(self):
        for name, (lo, hi) in self.as_dict().items():
            if not lo < hi:
                raise ValidationError(f"bounds for {name} must satisfy low < high")
        if self.sigma[0] <= 0 or self.sigma_y[0] <= 0:
            raise ValidationError("sigma and sigma_y lower bounds must be positive")

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {"mu": self.mu, "sigma": self.sigma, "lam": self.lam,
                "mu_y": self.mu_y, "sigma_y": self.sigma_y}

    def as_list(self) -> list[tuple[float, float]]:
        return [self.mu, self.sigma, self.lam, self.mu_y, self.sigma_y]

    def contains(self, params: MertonParams) -> bool:
        vals = (params.mu, params.sigma, params.lam, params.mu_y, params.sigma_y)
        return all(lo <= v <= hi for v, (lo, hi) in zip(vals, self.as_list()))

    def clip(self, values) -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        lows = np.array([lo for lo, _ in self.as_list()])
        highs = np.array([hi for _, hi in self.as_list()])
        return np.clip(arr, lows, highs)


@dataclass(frozen=True)
class OptionSpec:
    """One pricing problem."""

    spot: float
    strike: float
    tau: float
    rate: float
    kind: str = CALL
    style: str = EUROPEAN

    def __post_init__(self):
        if not (self.spot > 0 and self.strike > 0):
            raise ValidationError("spot and strike must be positive")
        if self.tau < 0:
            raise ValidationError("time to maturity must be nonnegative")
        if self.kind not in (CALL, PUT):
            raise ValidationError(f"kind must be 'C' or 'P', got {self.kind!r}")
        if self.style not in (EUROPEAN, AMERICAN):
            raise ValidationError(f"unknown style {self.style!r}")


def intrinsic(kind: str, strike: float, s) -> float | np.ndarray:
    """Terminal payoff at underlying price ``s`` (scalar or array)."""
    if kind == CALL:
        return np.maximum(np.asarray(s, dtype=float) - strike, 0.0)[()]
    if kind == PUT:
        return np.maximum(strike - np.asarray(s, dtype=float), 0.0)[()]
    raise ValidationError(f"kind must be 'C' or 'P', got {kind!r}")


def payoff(spec: OptionSpec, s) -> float | np.ndarray:
    return intrinsic(spec.kind, spec.strike, s)


@dataclass
class QuoteDataset:
    """Option quotes with per-row train/val/test tags.

    Stored as parallel arrays for fast batched evaluation; ``spec(i)``
    reconstructs the i-th row as an OptionSpec.
    """

    spot: np.ndarray
    strike: np.ndarray
    tau: np.ndarray
    rate: np.ndarray
    kind: np.ndarray        # '<U1' array of 'C'/'P'
    price: np.ndarray
    split: np.ndarray       # '<U5' array of 'train'/'val'/'test'
    style: str = AMERICAN

    def __post_init__(self):
        n = len(self.price)
        for name in ("spot", "strike", "tau", "rate", "kind", "split"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"column {name} length != {n}")
        for name in ("spot", "strike", "tau", "rate", "price"):
            col = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(col)):
                raise ValidationError(f"non-finite value in column {name}")
            object.__setattr__(self, name, col)
        if np.any(self.price < 0):
            raise ValidationError("negative price in dataset")
        self.kind = np.asarray(self.kind, dtype="<U1")
        self.split = np.asarray(self.split, dtype="<U5")
        bad = set(np.unique(self.split)) - set(SPLITS)
        if len(self.split) and bad:
            raise ValidationError(f"unknown split tags {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.price)

    def spec(self, i: int) -> OptionSpec:
        return OptionSpec(spot=float(self.spot[i]), strike=float(self.strike[i]),
                          tau=float(self.tau[i]), rate=float(self.rate[i]),
                          kind=str(self.kind[i]), style=self.style)

    def rows(self) -> Iterator[tuple[OptionSpec, float]]:
        for i in range(len(self)):
            yield self.spec(i), float(self.price[i])

    def features(self) -> np.ndarray:
        """Row features ``(S, K, T, r)`` as an [n, 4] array."""
        return np.column_stack([self.spot, self.strike, self.tau, self.rate])

    def subset(self, mask) -> "QuoteDataset":
        idx = np.asarray(mask)
        return QuoteDataset(
            spot=self.spot[idx], strike=self.strike[idx], tau=self.tau[idx],
            rate=self.rate[idx], kind=self.kind[idx], price=self.price[idx],
            split=self.split[idx], style=self.style)

    def by_split(self, split: str) -> "QuoteDataset":
        if split not in SPLITS:
            raise ValidationError(f"unknown split {split!r}")
        return self.subset(self.split == split)

    @classmethod
    def empty(cls) -> "QuoteDataset":
        z = np.empty(0)
        return cls(spot=z, strike=z, tau=z, rate=z,
                   kind=np.empty(0, dtype="<U1"), price=z,
                   split=np.empty(0, dtype="<U5"))


@dataclass(frozen=True)
class Metrics:
    mae: float
    mse: float
    rmse: float
    r2: float
    explained_variance: float
    max_error: float

    def as_dict(self) -> dict[str, float]:
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse,
                "r2": self.r2, "explained_variance": self.explained_variance,
                "max_error": self.max_error}


def compute_metrics(predicted, actual) -> Metrics:
    """Standard regression metrics of ``predicted`` against ``actual``.

    R2 uses total sum of squares about the actual mean; explained variance
    is 1 - Var(residual)/Var(actual). Zero-variance actuals make both
    undefined and raise rather than returning NaN.
    """
    pred = np.asarray(predicted, dtype=float).ravel()
    act = np.asarray(actual, dtype=float).ravel()
    if pred.shape != act.shape or pred.size == 0:
        raise ValidationError(
            f"predicted/actual must have equal nonzero length, "
            f"got {pred.size} and {act.size}")
    resid = pred - act
    abs_err = np.abs(resid)
    mse = float(np.mean(resid**2))
    sst = float(np.sum((act - act.mean()) ** 2))
    if sst == 0.0:
        raise ValidationError("actuals have zero variance; r2 is undefined")
    return Metrics(
        mae=float(np.mean(abs_err)),
        mse=mse,
        rmse=math.sqrt(mse),
        r2=1.0 - float(np.sum(resid**2)) / sst,
        explained_variance=1.0 - float(np.var(resid)) / float(np.var(act)),
        max_error=float(np.max(abs_err)),
    )
