"""Sweeps of the boundary normal derivative as p decreases toward 1, and the
rate fits that separate explosion 1/(p-1), critical 1/sqrt(p-1), and
exponential decay exp(-C/(p-1))."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .domain import BoundaryFunction, Domain
from .solver import boundary_derivative, discretize, solve

P_MIN, P_MAX = 1.05, 2.0

EXPLOSION = "Explosion"
CRITICAL = "Critical"
EXPONENTIAL_DECAY = "ExponentialDecay"
INCONCLUSIVE = "Inconclusive"


@dataclass
class SweepRow:
    p: float
    derivative: float
    grid_n: int
    h_used: float
    residual: float
    converged: bool


@dataclass
class SweepResult:
    rows: List[SweepRow]

    def converged_rows(self) -> List[SweepRow]:
        return [r for r in self.rows if r.converged]


@dataclass
class RateFit:
    model: str                 # "power" or "exponential"
    amplitude: float
    exponent_or_rate: float
    r_squared: float


@dataclass
class SolverOpts:
    n: int = 128
    delta: float = 1e-6
    tol: float = 1e-6
    max_iter: int = 500
    probe_factors: Sequence[float] = (8.0, 16.0)
    mollify: Optional[float] = None


def sweep(dom: Domain, F: BoundaryFunction, x0, p_list,
          opts: Optional[SolverOpts] = None) -> SweepResult:
    """Solve at each p (descending, warm-started by continuation) on a fixed
    grid and record the extrapolated boundary derivative at x0.

    Non-converged solves are kept in the result, flagged, and skipped by the
    fits.
    """
    if opts is None:
        opts = SolverOpts()
    p_list = sorted(set(float(p) for p in p_list), reverse=True)
    if not p_list:
        raise ValueError("p_list is empty")
    for p in p_list:
        if not P_MIN <= p <= P_MAX:
            raise ValueError(f"p={p} outside the supported range [{P_MIN}, {P_MAX}]")
    x0 = np.asarray(x0, dtype=float)
    nvec = dom.inward_normal(x0)
    if np.any(np.isnan(nvec)):
        raise ValueError(f"inward normal undefined at x0={x0.tolist()}")

    grid = discretize(dom, F, opts.n, mollify=opts.mollify)
    h_list = [f * grid.spacing for f in opts.probe_factors]
    rows = []
    u_prev = None
    for p in p_list:
        sol = solve(grid, p, delta=opts.delta, tol=opts.tol,
                    max_iter=opts.max_iter, u0=u_prev)
        u_prev = sol.values
        deriv = boundary_derivative(sol, dom, x0, h_list)
        rows.append(SweepRow(p, deriv, opts.n, min(h_list), sol.residual,
                             sol.converged))
    return SweepResult(rows)


def _regress(x: np.ndarray, y: np.ndarray):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res <= 1e-30 else 1.0 - ss_res / max(ss_tot, 1e-300)
    return float(coef[0]), float(coef[1]), max(min(r2, 1.0), 0.0)


def _fit_input(sw: SweepResult):
    rows = sw.converged_rows()
    if len(rows) < 3:
        raise ValueError(f"need >= 3 converged rows to fit, have {len(rows)}")
    for r in rows:
        if r.derivative <= 0:
            raise ValueError(f"nonpositive derivative {r.derivative} at p={r.p}")
    p = np.array([r.p for r in rows])
    d = np.array([r.derivative for r in rows])
    return p, d


def fit_power(sw: SweepResult) -> RateFit:
    """Least squares of log(derivative) on log(p-1); slope -1 is explosion,
    slope -1/2 is the critical rate."""
    p, d = _fit_input(sw)
    slope, intercept, r2 = _regress(np.log(p - 1.0), np.log(d))
    return RateFit("power", math.exp(intercept), slope, r2)


def fit_exponential(sw: SweepResult) -> RateFit:
    """Least squares of log(derivative) on 1/(p-1); a negative slope -C is the
    exponential decay rate."""
    p, d = _fit_input(sw)
    slope, intercept, r2 = _regress(1.0 / (p - 1.0), np.log(d))
    return RateFit("exponential", math.exp(intercept), slope, r2)


@dataclass(frozen=True)
class ClassifyThresholds:
    power_r2: float = 0.95
    explosion_band: tuple = (-1.3, -0.7)
    critical_band: tuple = (-0.65, -0.35)
    exp_r2: float = 0.9


def classify(sw: SweepResult, thresholds: ClassifyThresholds = ClassifyThresholds()) -> str:
    """Label the sweep Explosion / Critical / ExponentialDecay / Inconclusive."""
    if len(sw.converged_rows()) < 4:
        raise ValueError("classification needs >= 4 converged rows")
    pw = fit_power(sw)
    ex = fit_exponential(sw)
    th = thresholds
    if pw.r_squared >= th.power_r2 and th.explosion_band[0] <= pw.exponent_or_rate <= th.explosion_band[1]:
        return EXPLOSION
    if pw.r_squared >= th.power_r2 and th.critical_band[0] <= pw.exponent_or_rate <= th.critical_band[1]:
        return CRITICAL
    if ex.r_squared >= th.exp_r2 and ex.exponent_or_rate < 0 and ex.r_squared > pw.r_squared:
        return EXPONENTIAL_DECAY
    return INCONCLUSIVE
