"""Closed-form radial profiles of p-harmonic functions on spherical shells.

These are the exact oracles the grid solver and the game estimates are
checked against.  Powers r^(-gamma) are evaluated in log space and factored
against the inner radius so that gamma up to ~1e4 (p within 1e-4 of 1 in two
dimensions) stays finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def gamma(p: float, d: int) -> float:
    """Radial profile exponent (d - p)/(p - 1); explodes as p decreases to 1."""
    if p <= 1:
        raise ValueError(f"gamma requires p > 1, got p={p}")
    return (d - p) / (p - 1.0)


@dataclass(frozen=True)
class RadialProfile:
    """Radial p-harmonic interpolation between values v0 at r0 and v1 at r1."""

    p: float
    d: int
    r0: float
    r1: float
    v0: float
    v1: float

    def __post_init__(self):
        if not 1.0 < self.p <= 2.0:
            raise ValueError(f"p must lie in (1, 2], got p={self.p}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got d={self.d}")
        if not 0 < self.r0 < self.r1:
            raise ValueError(f"radii must satisfy 0 < r0 < r1, got ({self.r0}, {self.r1})")
        if self.p < self.d and gamma(self.p, self.d) <= 0:
            raise ValueError("exponent must be positive for p < d")

    @property
    def gamma(self) -> float:
        return gamma(self.p, self.d)

    def _shape(self, r):
        """Normalized profile s with s(r0)=0, s(r1)=1, stable for large exponents."""
        g = self.gamma
        if self.p == self.d:
            return (np.log(r) - math.log(self.r0)) / (math.log(self.r1) - math.log(self.r0))
        e_r = np.exp(-g * (np.log(r) - math.log(self.r0)))
        e_1 = math.exp(-g * (math.log(self.r1) - math.log(self.r0)))
        return (e_r - 1.0) / (e_1 - 1.0)

    def _shape_derivative(self, r):
        g = self.gamma
        if self.p == self.d:
            return 1.0 / (r * (math.log(self.r1) - math.log(self.r0)))
        e_r = np.exp(-g * (np.log(r) - math.log(self.r0)))
        e_1 = math.exp(-g * (math.log(self.r1) - math.log(self.r0)))
        return -g * e_r / r / (e_1 - 1.0)


def _check_range(prof: RadialProfile, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < prof.r0 - 1e-12 * prof.r1) or np.any(r > prof.r1 + 1e-12 * prof.r1):
        raise ValueError(f"radius outside [{prof.r0}, {prof.r1}]")
    return np.clip(r, prof.r0, prof.r1)


def radial_value(prof: RadialProfile, r):
    """Profile value at radius r in [r0, r1]."""
    r = _check_range(prof, r)
    out = prof.v0 + (prof.v1 - prof.v0) * prof._shape(r)
    return float(out) if np.isscalar(r) or out.ndim == 0 else out


def radial_derivative(prof: RadialProfile, r):
    """d/dr of the profile value, exact closed form."""
    r = _check_range(prof, r)
    out = (prof.v1 - prof.v0) * prof._shape_derivative(r)
    return float(out) if np.isscalar(r) or out.ndim == 0 else out


def barrier_lower(p: float, d: int, R: float, M: float, x, center) -> float:
    """Comparison barrier on the shell R < |x - center| < R + M: 0 on the inner
    sphere, 1 on the outer one.  The exterior-ball upper barrier is the same
    closed form with (R, M) set to the exterior-ball radii."""
    if R <= 0 or M <= 0:
        raise ValueError(f"shell radii must be positive, got R={R}, M={M}")
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    t = float(np.linalg.norm(x - center))
    prof = RadialProfile(p, d, R, R + M, 0.0, 1.0)
    return radial_value(prof, t)


def hitting_log_lower_bound(p: float, d: int, H: float, h: float) -> float:
    """Natural log of the explicit hitting lower bound; never underflows."""
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got p={p}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got d={d}")
    if not 0 < h < H:
        raise ValueError(f"heights must satisfy 0 < h < H, got h={h}, H={H}")
    pref = 2.0 * math.log(h) - math.log(64.0) - 2.0 * math.log(2.0 * H - h)
    expo = 32.0 * H ** 2 * (2.0 * H - h) ** 3 * d / (h ** 3 * (p - 1.0))
    return pref - expo


def hitting_lower_bound(p: float, d: int, H: float, h: float) -> float:
    """Explicit lower bound h^2/(64 (2H-h)^2) * exp(-32 H^2 (2H-h)^3 d / (h^3 (p-1)))
    on the value at height h of the unit-radius cylinder hitting problem.

    The exact value is in (0, 1); for p near 1 it underflows float64 to 0.0,
    in which case hitting_log_lower_bound carries the information.
    """
    return math.exp(hitting_log_lower_bound(p, d, H, h))
