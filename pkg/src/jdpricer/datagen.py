"""Synthetic option dataset generation via the PIDE solver, plus loading
and subsampling of quote CSVs.

Synthetic rows are sampled uniformly (strike as a moneyness multiple of
the sampled spot), labeled with the American PIDE price interpolated at
t = 0, and tagged with a seeded 70/15/15 train/val/test split. One PIDE
surface is solved per distinct (strike, tau, rate) triple and shared by
every spot that falls on it.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import pide
from .core import (AMERICAN, CALL, PUT, SPLITS, QuoteDataset,
                   ValidationError, intrinsic)

QUOTE_COLUMNS = ("underlying", "strike", "tau", "rate", "kind", "price")
_MAX_RESAMPLES = 8


@dataclass(frozen=True)
class SamplerRanges:
    """Uniform sampling ranges; strike is drawn as spot times a moneyness
    factor from ``moneyness`` so deep-ITM/OTM coverage scales with spot."""

    spot: tuple[float, float] = (200.0, 500.0)
    moneyness: tuple[float, float] = (0.5, 1.5)
    tau: tuple[float, float] = (0.02, 2.0)
    rate: tuple[float, float] = (0.0, 0.05)
    n_samples: int = 20_000
    kind: str = CALL
    seed: int = 42

    def __post_init__(self):
        for name in ("spot", "moneyness", "tau", "rate"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValidationError(f"{name} range must satisfy low < high")
        if self.spot[0] <= 0 or self.moneyness[0] <= 0:
            raise ValidationError("spot and moneyness lows must be positive")
        if self.tau[0] <= 0:
            raise ValidationError("tau low must be positive")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if self.kind not in (CALL, PUT):
            raise ValidationError(f"kind must be 'C' or 'P', got {self.kind!r}")


def assign_splits(n: int, seed: int, fractions=(0.70, 0.15, 0.15)) -> np.ndarray:
    """Deterministic 70/15/15 split tags for ``n`` rows."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    tags = np.empty(n, dtype="<U5")
    tags[order[:n_train]] = "train"
    tags[order[n_train:n_train + n_val]] = "val"
    tags[order[n_train + n_val:]] = "test"
    return tags


def _price_rows(params, kind, style, strike, tau, rate, spots,
                n_x: int, n_t: int) -> np.ndarray:
    grid = pide.default_grid(params, strike, tau, n_x=n_x, n_t=n_t, cover=spots)
    surface = pide.solve(params, kind, style, strike, rate, grid)
    prices = np.atleast_1d(pide.interpolate(surface, spots, 0.0))
    if style == AMERICAN:
        # node values dominate the payoff exactly, but linear-in-x
        # interpolation can undershoot the concave put intrinsic between
        # nodes; the floor keeps labels arbitrage-sane
        prices = np.maximum(prices, intrinsic(kind, strike, spots))
    return prices


def generate_synthetic(params, ranges: SamplerRanges, style: str = AMERICAN,
                       n_x: int = 600, n_t: int = 300,
                       n_jobs: int | None = None) -> QuoteDataset:
    """Sample option specs and label them with PIDE prices.

    Deterministic for a fixed seed. A row whose grid cannot cover the
    sampled spec is resampled a bounded number of times before erroring.
    """
    rng = np.random.default_rng(ranges.seed)
    n = ranges.n_samples
    spot = rng.uniform(*ranges.spot, size=n)
    strike = spot * rng.uniform(*ranges.moneyness, size=n)
    tau = rng.uniform(*ranges.tau, size=n)
    rate = rng.uniform(*ranges.rate, size=n)

    prices = np.full(n, np.nan)

    def solve_row(i: int):
        s, k, t, r = spot[i], strike[i], tau[i], rate[i]
        for attempt in range(_MAX_RESAMPLES + 1):
            try:
                prices[i] = _price_rows(params, ranges.kind, style,
                                        k, t, r, np.array([s]), n_x, n_t)[0]
                spot[i], strike[i], tau[i], rate[i] = s, k, t, r
                return
            except ValidationError:
                sub = np.random.default_rng([ranges.seed, i, attempt])
                s = sub.uniform(*ranges.spot)
                k = s * sub.uniform(*ranges.moneyness)
                t = sub.uniform(*ranges.tau)
                r = sub.uniform(*ranges.rate)
        raise ValidationError(
            f"row {i}: no coverable spec after {_MAX_RESAMPLES} resamples")

    workers = n_jobs or min(os.cpu_count() or 1, 8)
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(solve_row, range(n)))
    else:
        for i in range(n):
            solve_row(i)

    return QuoteDataset(
        spot=spot, strike=strike, tau=tau, rate=rate,
        kind=np.full(n, ranges.kind, dtype="<U1"),
        price=np.maximum(prices, 0.0),
        split=assign_splits(n, ranges.seed), style=style)


def write_quotes_csv(dataset: QuoteDataset, path, include_split: bool = True):
    """Write the core CSV schema (plus a split column by default); floats
    use shortest round-trip formatting so a reload is field-exact."""
    header = list(QUOTE_COLUMNS) + (["split"] if include_split else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(dataset.spot[i])), repr(float(dataset.strike[i])),
                   repr(float(dataset.tau[i])), repr(float(dataset.rate[i])),
                   str(dataset.kind[i]), repr(float(dataset.price[i]))]
            if include_split:
                row.append(str(dataset.split[i]))
            w.writerow(row)


def load_market_csv(path) -> QuoteDataset:
    """Load a quote CSV in the core schema, or the raw bid/ask schema in
    which case price = (bid + ask) / 2. Malformed rows are rejected with a
    warning naming their line numbers."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            warnings.warn(f"{path}: empty file, returning empty dataset")
            return QuoteDataset.empty()
        cols = {name.strip().lower(): i for i, name in enumerate(header)}
        required = {"underlying", "strike", "tau", "rate", "kind"}
        missing = required - cols.keys()
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        raw_schema = "price" not in cols
        if raw_schema and not {"bid", "ask"} <= cols.keys():
            raise ValidationError(f"{path}: needs a price column or bid/ask")

        rows, bad_lines = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                spot = float(rec[cols["underlying"]])
                strike = float(rec[cols["strike"]])
                tau = float(rec[cols["tau"]])
                rate = float(rec[cols["rate"]])
                kind = rec[cols["kind"]].strip()
                if raw_schema:
                    bid = float(rec[cols["bid"]])
                    ask = float(rec[cols["ask"]])
                    if bid < 0 or ask < 0 or ask < bid:
                        raise ValueError("bad bid/ask")
                    price = 0.5 * (bid + ask)
                else:
                    price = float(rec[cols["price"]])
                split = rec[cols["split"]].strip() if "split" in cols else "train"
                if (not math.isfinite(price) or price < 0 or spot <= 0
                        or strike <= 0 or tau < 0 or not math.isfinite(rate)
                        or kind not in (CALL, PUT) or split not in SPLITS):
                    raise ValueError("invalid field")
                rows.append((spot, strike, tau, rate, kind, price, split))
            except (ValueError, IndexError):
                bad_lines.append(lineno)
        if bad_lines:
            shown = ", ".join(map(str, bad_lines[:20]))
            more = "" if len(bad_lines) <= 20 else f" (+{len(bad_lines) - 20} more)"
            warnings.warn(f"{path}: rejected malformed rows at lines {shown}{more}")
        if not rows:
            warnings.warn(f"{path}: no valid rows, returning empty dataset")
            return QuoteDataset.empty()

    arr = list(zip(*rows))
    return QuoteDataset(
        spot=np.array(arr[0]), strike=np.array(arr[1]), tau=np.array(arr[2]),
        rate=np.array(arr[3]), kind=np.array(arr[4], dtype="<U1"),
        price=np.array(arr[5]), split=np.array(arr[6], dtype="<U5"))


def subsample(dataset: QuoteDataset, ratio: float, seed: int = 42) -> QuoteDataset:
    """Uniform subsample without replacement, stratified by split so the
    train/val/test proportions are approximately preserved."""
    if not 0 < ratio <= 1:
        raise ValidationError("ratio must lie in (0, 1]")
    if ratio == 1.0:
        return dataset.subset(np.arange(len(dataset)))
    rng = np.random.default_rng(seed)
    keep = []
    for split in SPLITS:
        idx = np.nonzero(dataset.split == split)[0]
        if len(idx) == 0:
            continue
        n_keep = int(round(ratio * len(idx)))
        if n_keep:
            keep.append(rng.choice(idx, size=n_keep, replace=False))
    if not keep:
        return QuoteDataset.empty()
    return dataset.subset(np.sort(np.concatenate(keep)))
