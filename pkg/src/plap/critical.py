"""Closed-form calculus for the critical cylinder example.

The cylinder B^d(0,1) x (0,1) with data 1 on sides and top, 0 on the bottom,
pins the boundary derivative at the bottom center between
c1 sqrt(d/(p-1)) y and sqrt(d/(p-1)) y on the axis.  This module holds the
quadratic comparison functions, the explicit barrier, the minimum-value
recursion floor and its tail product, and the checks that a grid solution
sits inside the band and has a non-increasing axis ratio u(0,y)/y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .solver import GridSolution, interpolate

C1_DEFAULT = 1.0 / 40.0
C1_IMPROVED = 1.0 / 24.0


@dataclass(frozen=True)
class QuadraticTest:
    """w(x, y) = |x|^2 + 2 a y - b y^2 on R^d x R."""

    a: float
    b: float
    p: float
    d: int

    def value(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        return np.sum(x * x, axis=-1) + 2.0 * self.a * y - self.b * y * y


def delta_pN_quadratic(q: QuadraticTest, x, y):
    """Normalized p-Laplacian of the quadratic test function, exact closed form:
    8 [ |x|^2 (d - b + p - 2) + (a - b y)^2 (d - b (p-1)) ]."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    xx = np.sum(x * x, axis=-1)
    ay = (q.a - q.b * y) ** 2
    out = 8.0 * (xx * (q.d - q.b + q.p - 2.0) + ay * (q.d - q.b * (q.p - 1.0)))
    return float(out[0]) if out.shape == (1,) and np.isscalar(y) else out


def band_limit(p: float, d: int) -> float:
    """Upper end sqrt((p-1)/d) of the y-range where the band is proved."""
    return math.sqrt((p - 1.0) / d)


def upper_band(p: float, d: int, y):
    """sqrt(d/(p-1)) * y, valid for 0 <= y <= sqrt((p-1)/d)."""
    y = np.asarray(y, dtype=float)
    ymax = band_limit(p, d)
    if np.any(y < -1e-15) or np.any(y > ymax * (1.0 + 1e-12)):
        raise ValueError(f"y outside the band validity range [0, {ymax:.6g}]")
    out = math.sqrt(d / (p - 1.0)) * y
    return float(out) if out.ndim == 0 else out


def lower_band(p: float, d: int, y, c1: float = C1_DEFAULT):
    """c1 * sqrt(d/(p-1)) * y with c1 = 1/40 by default (1/24 after the tail
    product improvement)."""
    if c1 <= 0:
        raise ValueError(f"c1 must be positive, got {c1}")
    out = c1 * np.asarray(upper_band(p, d, y))
    return float(out) if out.ndim == 0 else out


def mk_floor(k: int) -> float:
    """Closed-form floor max(0, 1 - 11/(k+2)) for the minimum of u on level y_k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return max(0.0, 1.0 - 11.0 / (k + 2.0))


def tail_product(start: int, terms: int) -> float:
    """Partial product of (1 - 11/(l+2)^2) for l = start .. start+terms-1."""
    if start < 2:
        raise ValueError(f"start must be >= 2 so every factor is positive, got {start}")
    if terms < 0:
        raise ValueError(f"terms must be >= 0, got {terms}")
    if terms == 0:
        return 1.0
    l = np.arange(start, start + terms, dtype=float)
    factors = -11.0 / (l + 2.0) ** 2
    if np.any(factors <= -1.0):
        raise ValueError("a factor in the requested range is <= 0")
    return float(math.exp(np.sum(np.log1p(factors))))


def f_barrier(x, y, k: int, p: float, d: int):
    """Barrier (b (y - y_{k+2})^2 + 1 - |x|^2) / (b y_{k+2}^2) with
    b = d/(2(p-1)) and y_j = j sqrt((p-1)/d)."""
    if not 1.0 < p < 2.0:
        raise ValueError(f"p must lie in (1, 2), got p={p}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xx = np.sum(x * x, axis=-1)
    if np.any(xx > 1.0 + 1e-12):
        raise ValueError("|x| must be <= 1")
    y = np.asarray(y, dtype=float)
    b = d / (2.0 * (p - 1.0))
    yk2 = (k + 2.0) * math.sqrt((p - 1.0) / d)
    out = (b * (y - yk2) ** 2 + 1.0 - xx) / (b * yk2 * yk2)
    return float(out[0]) if out.shape == (1,) and np.isscalar(y) else out


# --------------------------------------------------------------------------
# grid-solution checks
# --------------------------------------------------------------------------

@dataclass
class BandReport:
    y: np.ndarray
    u: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    passed: np.ndarray
    c1: float
    slack: float

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.passed))


def _require_critical_cylinder(sol: GridSolution, p: float, d: int):
    dom = sol.grid.domain
    if dom.kind != "cylinder":
        raise ValueError(f"solution domain is {dom.kind!r}, expected a cylinder")
    dc, R, H = dom.params
    if dc != d:
        raise ValueError(f"cylinder cross-section dimension {dc} != requested d={d}")
    if sol.grid.data.description != "cylinder-sides-top":
        raise ValueError(
            f"solution data is {sol.grid.data.description!r}, expected 'cylinder-sides-top'")
    if abs(sol.p - p) > 1e-12:
        raise ValueError(f"solution was solved at p={sol.p}, requested p={p}")
    return dc, R, H


def _axis_nodes(sol: GridSolution):
    """y-grid values and u(0, y) along the symmetry axis."""
    g = sol.grid
    ys = g.axes()[g.dim - 1]
    dc, R, H = g.domain.params
    inner = (ys > 0) & (ys < H)
    ys = ys[inner]
    pts = np.zeros((len(ys), g.dim))
    pts[:, -1] = ys
    u = interpolate(sol, pts)
    ok = ~np.isnan(u)
    return ys[ok], u[ok]


def verify_band(sol: GridSolution, p: float, d: int, c1: float = C1_DEFAULT,
                slack: float = 0.1) -> BandReport:
    """Check lower <= u(0, y) <= upper on axis nodes with 0 < y <= sqrt((p-1)/d).

    Nodes within 2 cells of y = 0 are excluded and the bounds are slackened
    relatively (lower scaled by 1-slack, upper by 1+slack) and evaluated with
    a 2-cell y offset, absorbing the first-order boundary treatment.  Slack
    must stay relative to each bound: an additive fraction of the band width
    would swallow the lower bound entirely (c1 = 1/40 of the width).
    """
    _require_critical_cylinder(sol, p, d)
    h = sol.grid.spacing
    ymax = band_limit(p, d)
    ys, u = _axis_nodes(sol)
    sel = (ys > 2.0 * h) & (ys <= ymax)
    ys, u = ys[sel], u[sel]
    lo = (1.0 - slack) * lower_band(p, d, np.maximum(ys - 2.0 * h, 0.0), c1)
    hi = (1.0 + slack) * upper_band(p, d, np.minimum(ys + 2.0 * h, ymax))
    passed = (u >= lo) & (u <= hi)
    return BandReport(ys, np.asarray(u), lo, hi, passed, c1, slack)


@dataclass
class MonotonicityReport:
    y: np.ndarray
    ratio: np.ndarray
    max_increase: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_increase <= self.tol


def axis_monotonicity(sol: GridSolution, tol: float = 1e-3) -> MonotonicityReport:
    """Check that u(0, y)/y is non-increasing along the axis within tol per step."""
    dom = sol.grid.domain
    if dom.kind != "cylinder":
        raise ValueError(f"solution domain is {dom.kind!r}, expected a cylinder")
    ys, u = _axis_nodes(sol)
    ratio = u / ys
    steps = np.diff(ratio)
    max_inc = float(steps.max()) if len(steps) else 0.0
    return MonotonicityReport(ys, ratio, max_inc, tol)
