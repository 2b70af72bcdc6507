"""IMEX finite-difference solver for the Merton pricing PIDE in log price.

Backward induction from the maturity payoff: the diffusion/drift/discount
terms (plus the local jump-loss term lam*V) are treated implicitly through
a constant tridiagonal system (-a, b, -c), while the nonlocal jump gain
integral is an explicit discrete convolution of the previous time level
with the Levy kernel nu(k*dx)*dx, evaluated on a domain extended by
``ext`` on both sides. Extension values follow the asymptotic boundary
behaviour (linear in S for the in-the-money side, zero on the other); the
American constraint is an elementwise max with the payoff after each step.

The time loop runs in the compiled kernel ``jdpricer._imex`` when it is
available and falls back to a NumPy implementation otherwise; set
``JDPRICER_PURE_PY=1`` to force the fallback.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (AMERICAN, CALL, EUROPEAN, PUT, MertonParams,
                   ValidationError, intrinsic)
from . import _imex_py

if os.environ.get("JDPRICER_PURE_PY"):
    _imex = None
else:
    try:
        from . import _imex
    except ImportError:
        _imex = None

# kernel taps below this fraction of the peak are exact zeros in the sum
_KERNEL_CUTOFF = 1e-20


def backend() -> str:
    """Name of the stepping backend selected at import time."""
    return "compiled" if _imex is not None else "numpy"


@dataclass(frozen=True)
class GridSpec:
    """Uniform log-price/time grid with boundary extension width ``ext``."""

    x_min: float
    x_max: float
    ext: float
    n_x: int
    n_t: int
    maturity: float

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValidationError("x_min must be below x_max")
        if self.ext <= 0:
            raise ValidationError("extension width must be positive")
        if self.n_x < 8 or self.n_t < 4:
            raise ValidationError("grid needs n_x >= 8 and n_t >= 4")
        if self.maturity <= 0:
            raise ValidationError("maturity must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dt(self) -> float:
        return self.maturity / self.n_t

    @property
    def n_ext(self) -> int:
        return max(1, int(math.ceil(self.ext / self.dx - 1e-12)))

    def x_nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x + 1)

    def t_nodes(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t + 1)


@dataclass
class ValueSurface:
    """Solved option values: row j holds V(t_j, x) on the core grid."""

    grid: GridSpec
    values: np.ndarray          # [n_t+1, n_x+1]
    kind: str
    style: str
    strike: float
    rate: float


def default_ext(params: MertonParams) -> float:
    """Extension wide enough that the Levy kernel mass outside is < 1e-8."""
    return max(6.0 * params.sigma_y + abs(params.mu_y), 1.0)


def default_grid(params: MertonParams, strike: float, maturity: float,
                 n_x: int = 600, n_t: int = 300, cover=None,
                 half_width: float | None = None) -> GridSpec:
    """Production grid centred on ln K, optionally widened to cover the
    spots in ``cover`` with a small interior margin."""
    if half_width is None:
        var_total = (params.sigma**2
                     + params.lam * (params.mu_y**2 + params.sigma_y**2))
        half_width = max(5.0 * math.sqrt(var_total * maturity), 0.5)
    x_k = math.log(strike)
    x_min, x_max = x_k - half_width, x_k + half_width
    if cover is not None:
        xs = np.log(np.asarray(cover, dtype=float))
        x_min = min(x_min, float(xs.min()) - 0.02)
        x_max = max(x_max, float(xs.max()) + 0.02)
    return GridSpec(x_min=x_min, x_max=x_max, ext=default_ext(params),
                    n_x=n_x, n_t=n_t, maturity=maturity)


def levy_density(params: MertonParams, y) -> float | np.ndarray:
    """Jump measure density: lam * Normal(y; mu_y, sigma_y^2)."""
    ya = np.asarray(y, dtype=float)
    z = (ya - params.mu_y) / params.sigma_y
    dens = params.lam * np.exp(-0.5 * z * z) / (params.sigma_y * math.sqrt(2 * math.pi))
    return dens if np.ndim(y) else float(dens)


def imex_coefficients(params: MertonParams, rate: float,
                      dx: float, dt: float) -> tuple[float, float, float]:
    """Tridiagonal coefficients of the implicit part; the solve uses
    (-a, b, -c) on the sub/main/super diagonals."""
    if dx <= 0 or dt <= 0:
        raise ValidationError("dx and dt must be positive")
    gamma = rate - 0.5 * params.sigma**2 - params.lam * params.jump_mean_relative
    diff = params.sigma**2 / dx**2
    a = 0.5 * dt * (diff - gamma / dx)
    b = 1.0 + dt * (diff + rate + params.lam)
    c = 0.5 * dt * (diff + gamma / dx)
    return a, b, c


def _jump_kernel(params: MertonParams, dx: float, n_ext: int):
    """Discrete Levy kernel nu(k*dx)*dx for k in [-n_ext, n_ext], trimmed
    to its numerically nonzero support. Returns (weights, k_lo)."""
    k = np.arange(-n_ext, n_ext + 1)
    w = levy_density(params, k * dx) * dx
    peak = float(w.max())
    if peak <= 0.0:
        return np.zeros(1), 0
    keep = np.nonzero(w >= peak * _KERNEL_CUTOFF)[0]
    lo, hi = int(keep[0]), int(keep[-1])
    return np.ascontiguousarray(w[lo:hi + 1]), lo - n_ext


def solve(params: MertonParams, kind: str, style: str, strike: float,
          rate: float, grid: GridSpec) -> ValueSurface:
    """Solve the pricing PIDE backward from maturity.

    Raises if the strike lies outside the core domain; warns when dx
    exceeds sigma_y (jump kernel under-resolved).
    """
    if kind not in (CALL, PUT):
        raise ValidationError(f"kind must be 'C' or 'P', got {kind!r}")
    if style not in (EUROPEAN, AMERICAN):
        raise ValidationError(f"unknown style {style!r}")
    x_k = math.log(strike)
    if not grid.x_min <= x_k <= grid.x_max:
        raise ValidationError(
            f"strike {strike} (ln K = {x_k:.4f}) outside the core domain "
            f"[{grid.x_min:.4f}, {grid.x_max:.4f}]")
    dx, dt = grid.dx, grid.dt
    if params.lam > 0 and dx > params.sigma_y:
        warnings.warn(
            f"grid spacing dx = {dx:.4g} exceeds sigma_y = {params.sigma_y:.4g}; "
            "jump kernel is under-resolved", RuntimeWarning)

    m = grid.n_ext
    x_ext = grid.x_min + dx * np.arange(-m, grid.n_x + m + 1)
    s_ext = np.exp(x_ext)
    pay_ext = intrinsic(kind, strike, s_ext)
    kern, k_lo = _jump_kernel(params, dx, m)
    a, b, c = imex_coefficients(params, rate, dx, dt)

    # discounted strike per time level: K * exp(-r * (T - t_j))
    tau = grid.maturity - grid.t_nodes()
    disc = strike * np.exp(-rate * tau)

    values = np.empty((grid.n_t + 1, grid.n_x + 1))
    values[grid.n_t] = pay_ext[m:m + grid.n_x + 1]
    v_ext = pay_ext.copy()

    # Thomas needs strict diagonal dominance (b > |a| + |c|); degenerate
    # grids fall through to the pivoting banded solve of the NumPy stepper.
    dominant = b > abs(a) + abs(c)
    if _imex is not None and dominant:
        inv_m, cp = _thomas_factors(a, b, c, grid.n_x - 1)
        _imex.backward_induction(
            values, v_ext, s_ext, np.ascontiguousarray(kern), int(k_lo),
            disc, float(a), float(c), inv_m, cp, float(dt), float(strike),
            int(m), kind == CALL, style == AMERICAN)
    else:
        _imex_py.backward_induction(
            values, v_ext, s_ext, np.ascontiguousarray(kern), int(k_lo),
            disc, float(a), float(b), float(c), float(dt), float(strike),
            int(m), kind == CALL, style == AMERICAN)
    return ValueSurface(grid=grid, values=values, kind=kind, style=style,
                        strike=strike, rate=rate)


def _thomas_factors(a: float, b: float, c: float, n: int):
    """Forward-elimination factors for the constant system (-a, b, -c)."""
    inv_m = np.empty(n)
    cp = np.empty(n)
    inv_m[0] = 1.0 / b
    cp[0] = -c / b
    for i in range(1, n):
        m_i = b + a * cp[i - 1]
        inv_m[i] = 1.0 / m_i
        cp[i] = -c / m_i
    return inv_m, cp


def interpolate(surface: ValueSurface, s, t) -> float | np.ndarray:
    """Bilinear interpolation of the surface at spot(s) ``s`` and time ``t``.

    Queries must lie inside the core domain: x_min <= ln s <= x_max and
    0 <= t <= maturity.
    """
    g = surface.grid
    sa = np.asarray(s, dtype=float)
    ta = np.asarray(t, dtype=float)
    if np.any(sa <= 0):
        raise ValidationError("spot must be positive")
    x = np.log(sa)
    eps = 1e-12
    if np.any(x < g.x_min - eps) or np.any(x > g.x_max + eps):
        raise ValidationError("query spot outside the core domain")
    if np.any(ta < -eps) or np.any(ta > g.maturity + eps):
        raise ValidationError("query time outside [0, maturity]")

    fx = np.clip((x - g.x_min) / g.dx, 0.0, g.n_x)
    ft = np.clip(ta / g.dt, 0.0, g.n_t)
    ix = np.minimum(fx.astype(int), g.n_x - 1)
    it = np.minimum(ft.astype(int), g.n_t - 1)
    wx = fx - ix
    wt = ft - it
    v = surface.values
    out = ((1 - wt) * ((1 - wx) * v[it, ix] + wx * v[it, ix + 1])
           + wt * ((1 - wx) * v[it + 1, ix] + wx * v[it + 1, ix + 1]))
    return out if (np.ndim(s) or np.ndim(t)) else float(out)
