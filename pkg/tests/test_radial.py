import math

import numpy as np
import pytest

from plap import domain as dm
from plap.radial import (RadialProfile, barrier_lower, gamma, hitting_lower_bound,
                         hitting_log_lower_bound, radial_derivative, radial_value)
from plap.solver import NODE_EXTERIOR, discretize, weak_residual


def test_gamma_values():
    assert gamma(2.0, 2) == 0.0
    assert gamma(1.5, 2) == pytest.approx(1.0)
    assert gamma(1.5, 3) == pytest.approx(3.0)


def test_gamma_domain_error():
    with pytest.raises(ValueError):
        gamma(1.0, 2)
    with pytest.raises(ValueError):
        gamma(0.5, 2)


def test_gamma_explodes_as_p_drops():
    # gamma(1 + 1/k, d) = k (d-1) - 1 exactly; check the lower bound up to k = 1e6
    k = np.arange(1, 1_000_001, dtype=float)
    for d in (2, 3):
        g = (d - (1.0 + 1.0 / k)) / (1.0 / k)
        floor = k * (d - 1) - 1.0
        assert np.all(g >= floor - 1e-6 * np.maximum(floor, 1.0))


def test_radial_value_boundary_conditions_and_midpoint():
    prof = RadialProfile(1.5, 2, 1.0, 2.0, 0.0, 1.0)
    assert radial_value(prof, 1.0) == pytest.approx(0.0, abs=1e-14)
    assert radial_value(prof, 2.0) == pytest.approx(1.0, abs=1e-14)
    # gamma = 1: (1/1.5 - 1)/(1/2 - 1) = 2/3
    assert radial_value(prof, 1.5) == pytest.approx(2.0 / 3.0, abs=1e-14)


def test_radial_value_log_branch():
    prof = RadialProfile(2.0, 2, 1.0, 2.0, 0.0, 1.0)
    assert radial_value(prof, 1.5) == pytest.approx(math.log(1.5) / math.log(2.0))
    assert radial_derivative(prof, 1.0) == pytest.approx(1.0 / math.log(2.0))


def test_radial_derivative_values():
    prof = RadialProfile(1.5, 2, 1.0, 2.0, 0.0, 1.0)
    # u(r) = (1/r - 1)/(-1/2) = 2(1 - 1/r), so u'(r) = 2/r^2
    assert radial_derivative(prof, 1.0) == pytest.approx(2.0)
    assert radial_derivative(prof, 2.0) == pytest.approx(0.5)


def test_radial_range_error():
    prof = RadialProfile(1.5, 2, 1.0, 2.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        radial_value(prof, 0.5)
    with pytest.raises(ValueError):
        radial_derivative(prof, 2.5)


def test_radial_monotone_on_random_pairs():
    rng = np.random.default_rng(3)
    prof = RadialProfile(1.3, 3, 0.7, 2.9, 0.0, 1.0)
    r = rng.uniform(0.7, 2.9, size=(1000, 2))
    lo, hi = r.min(axis=1), r.max(axis=1)
    keep = hi - lo > 1e-9
    vals_lo = radial_value(prof, lo[keep])
    vals_hi = radial_value(prof, hi[keep])
    assert np.all(vals_hi > vals_lo)


def test_radial_extreme_gamma_no_overflow():
    # p close to 1 drives the exponent to ~2e4; log-space evaluation must survive
    prof = RadialProfile(1.0001, 3, 1.0, 2.0, 0.0, 1.0)
    v = radial_value(prof, 1.5)
    assert 0.999 <= v <= 1.0
    assert np.isfinite(radial_derivative(prof, 1.0))


def test_profile_validation():
    with pytest.raises(ValueError):
        RadialProfile(2.5, 2, 1.0, 2.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        RadialProfile(1.5, 2, 2.0, 1.0, 0.0, 1.0)


def test_barrier_shell_values():
    assert barrier_lower(1.5, 2, 1.0, 1.0, (2.0, 0.0), (1.0, 0.0)) == pytest.approx(0.0, abs=1e-14)
    assert barrier_lower(1.5, 2, 1.0, 1.0, (3.0, 0.0), (1.0, 0.0)) == pytest.approx(1.0, abs=1e-14)
    # |x - center| = 1.5 reproduces the radial midpoint arithmetic
    assert barrier_lower(1.5, 2, 1.0, 1.0, (2.5, 0.0), (1.0, 0.0)) == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError):
        barrier_lower(1.5, 2, 1.0, 1.0, (5.0, 0.0), (1.0, 0.0))


def test_hitting_bound_hand_values():
    # H=1, h=0.5, d=1: prefactor 1/576 and exponent -864/(p-1)
    for p in (1.2, 1.5, 2.0):
        expect = math.log(1.0 / 576.0) - 864.0 / (p - 1.0)
        assert hitting_log_lower_bound(p, 1, 1.0, 0.5) == pytest.approx(expect, rel=1e-12)
        assert hitting_lower_bound(p, 1, 1.0, 0.5) == pytest.approx(math.exp(expect))


def test_hitting_bound_monotone_in_p():
    ps = np.linspace(1.05, 2.0, 40)
    vals = [hitting_log_lower_bound(p, 2, 1.0, 0.5) for p in ps]
    assert np.all(np.diff(vals) > 0)


def test_hitting_bound_vanishes_as_h_drops():
    assert hitting_lower_bound(1.9, 1, 1.0, 1e-4) == 0.0 or hitting_lower_bound(1.9, 1, 1.0, 1e-4) < 1e-100


def test_hitting_bound_in_unit_interval():
    rng = np.random.default_rng(11)
    for _ in range(200):
        H = rng.uniform(0.5, 3.0)
        h = rng.uniform(0.1, 0.95) * H
        p = rng.uniform(1.05, 2.0)
        d = int(rng.integers(1, 4))
        log_b = hitting_log_lower_bound(p, d, H, h)
        assert log_b < 0.0  # the exact bound is always in (0, 1)
        if log_b > -700.0:  # representable without underflow
            b = hitting_lower_bound(p, d, H, h)
            assert 0.0 < b < 1.0


def test_hitting_bound_validation():
    with pytest.raises(ValueError):
        hitting_lower_bound(1.5, 1, 1.0, 1.5)
    with pytest.raises(ValueError):
        hitting_lower_bound(1.5, 1, 1.0, 0.0)
    with pytest.raises(ValueError):
        hitting_lower_bound(2.5, 1, 1.0, 0.5)


def test_profile_satisfies_discrete_weak_residual_1d():
    # in one dimension the profile is affine and solves the discrete weak form
    # exactly, so the solver's residual operator sees only rounding
    prof = RadialProfile(1.5, 1, 1.0, 2.0, 0.0, 1.0)
    dom = dm.box([(1.0, 2.0)])
    data = dm.BoundaryFunction(lambda pts: (np.atleast_2d(pts)[:, 0] >= 1.5).astype(float),
                               "right-one")
    grid = discretize(dom, data, 512)
    pts = grid.node_points()[:, 0]
    vals = np.zeros_like(pts)
    ok = (grid.node_class.ravel() != NODE_EXTERIOR)
    vals[ok] = radial_value(prof, np.clip(pts[ok], 1.0, 2.0))
    assert weak_residual(grid, vals.reshape(grid.shape), 1.5) <= 1e-6
