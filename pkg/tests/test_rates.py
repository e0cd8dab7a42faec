import numpy as np
import pytest

from plap import domain as dm
from plap import rates
from plap.radial import RadialProfile, radial_derivative


def _synthetic(fn, ps=(1.5, 1.4, 1.3, 1.2), n=128):
    rows = [rates.SweepRow(p, fn(p), n, 0.05, 1e-9, True) for p in ps]
    return rates.SweepResult(rows)


def test_fit_power_exact_explosion():
    sw = _synthetic(lambda p: 5.0 / (p - 1.0))
    fit = rates.fit_power(sw)
    assert fit.exponent_or_rate == pytest.approx(-1.0, abs=1e-10)
    assert fit.amplitude == pytest.approx(5.0, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_fit_power_exact_critical():
    sw = _synthetic(lambda p: 3.0 * (p - 1.0) ** -0.5)
    fit = rates.fit_power(sw)
    assert fit.exponent_or_rate == pytest.approx(-0.5, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_fit_power_constant_slope_zero():
    sw = _synthetic(lambda p: 2.0)
    fit = rates.fit_power(sw)
    assert fit.exponent_or_rate == pytest.approx(0.0, abs=1e-12)


def test_fit_exponential_exact():
    sw = _synthetic(lambda p: np.exp(-3.0 / (p - 1.0)))
    fit = rates.fit_exponential(sw)
    assert fit.exponent_or_rate == pytest.approx(-3.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_model_mismatch_ranks_fits():
    sw = _synthetic(lambda p: 5.0 / (p - 1.0), ps=(1.5, 1.4, 1.3, 1.2, 1.1))
    assert rates.fit_exponential(sw).r_squared < rates.fit_power(sw).r_squared
    sw2 = _synthetic(lambda p: np.exp(-3.0 / (p - 1.0)), ps=(1.5, 1.4, 1.3, 1.2, 1.1))
    assert rates.fit_power(sw2).r_squared < rates.fit_exponential(sw2).r_squared


def test_fit_preconditions():
    sw = _synthetic(lambda p: 1.0, ps=(1.5, 1.4))
    with pytest.raises(ValueError, match="3 converged"):
        rates.fit_power(sw)
    bad = _synthetic(lambda p: -1.0)
    with pytest.raises(ValueError, match="nonpositive"):
        rates.fit_power(bad)
    flagged = rates.SweepResult([rates.SweepRow(p, 1.0, 64, 0.05, 1.0, False)
                                 for p in (1.5, 1.4, 1.3)])
    with pytest.raises(ValueError):
        rates.fit_exponential(flagged)


def test_classify_synthetic():
    assert rates.classify(_synthetic(lambda p: 1.0 / (p - 1.0))) == rates.EXPLOSION
    assert rates.classify(_synthetic(lambda p: (p - 1.0) ** -0.5)) == rates.CRITICAL
    assert rates.classify(
        _synthetic(lambda p: np.exp(-3.0 / (p - 1.0)), ps=(1.5, 1.4, 1.3, 1.2, 1.1))
    ) == rates.EXPONENTIAL_DECAY
    assert rates.classify(_synthetic(lambda p: 2.0)) == rates.INCONCLUSIVE


def test_classify_requires_four_rows():
    with pytest.raises(ValueError):
        rates.classify(_synthetic(lambda p: 1.0, ps=(1.5, 1.4, 1.3)))


def test_fit_slope_invariant_under_scaling():
    sw = _synthetic(lambda p: 2.0 / (p - 1.0) ** 0.8, ps=(1.5, 1.35, 1.2, 1.1))
    scaled = rates.SweepResult([
        rates.SweepRow(r.p, 7.3 * r.derivative, r.grid_n, r.h_used, r.residual, r.converged)
        for r in sw.rows])
    for fit in (rates.fit_power, rates.fit_exponential):
        a = fit(sw).exponent_or_rate
        b = fit(scaled).exponent_or_rate
        assert abs(a - b) <= 1e-12


def test_classify_invariant_under_row_order():
    sw = _synthetic(lambda p: 1.0 / (p - 1.0), ps=(1.5, 1.4, 1.3, 1.2, 1.1))
    shuffled = rates.SweepResult(list(reversed(sw.rows)))
    assert rates.classify(sw) == rates.classify(shuffled)
    assert rates.fit_power(sw).exponent_or_rate == pytest.approx(
        rates.fit_power(shuffled).exponent_or_rate, abs=1e-14)


def test_non_converged_rows_excluded_but_reported():
    rows = [rates.SweepRow(p, 1.0 / (p - 1.0), 64, 0.05, 1e-9, True)
            for p in (1.5, 1.4, 1.3, 1.2)]
    rows.append(rates.SweepRow(1.1, 123.0, 64, 0.05, 1.0, False))  # junk, flagged
    sw = rates.SweepResult(rows)
    assert len(sw.rows) == 5
    assert len(sw.converged_rows()) == 4
    fit = rates.fit_power(sw)
    assert fit.exponent_or_rate == pytest.approx(-1.0, abs=1e-9)


def test_oracle_data_classification():
    # closed-form derivative data, no solver involved: the inner sphere sees
    # explosion, the outer sphere (data 1 inside) sees exponential decay
    ps = [1.5, 1.4, 1.3, 1.2, 1.1]
    inner = [radial_derivative(RadialProfile(p, 2, 1.0, 2.0, 0.0, 1.0), 1.0) for p in ps]
    outer = [-radial_derivative(RadialProfile(p, 2, 1.0, 2.0, 1.0, 0.0), 2.0) for p in ps]
    sw_in = rates.SweepResult(
        [rates.SweepRow(p, v, 0, 0.0, 0.0, True) for p, v in zip(ps, inner)])
    sw_out = rates.SweepResult(
        [rates.SweepRow(p, v, 0, 0.0, 0.0, True) for p, v in zip(ps, outer)])
    assert rates.classify(sw_in) == rates.EXPLOSION
    assert rates.classify(sw_out) == rates.EXPONENTIAL_DECAY


def test_sweep_rows_and_errors():
    dom = dm.annulus(1.0, 2.0, 2)
    F = dm.annulus_data(dom, "outer")
    with pytest.raises(ValueError, match="empty"):
        rates.sweep(dom, F, (1.0, 0.0), [])
    with pytest.raises(ValueError, match="range"):
        rates.sweep(dom, F, (1.0, 0.0), [1.01])
    opts = rates.SolverOpts(n=24, tol=1e-6, max_iter=200, probe_factors=(4.0, 8.0))
    sw = rates.sweep(dom, F, (1.0, 0.0), [1.5], opts)
    assert len(sw.rows) == 1
    assert sw.rows[0].derivative > 1.0


def test_sweep_monotone_p_ordering_and_derivative_trend():
    dom = dm.annulus(1.0, 2.0, 2)
    opts = rates.SolverOpts(n=48, tol=1e-7, max_iter=300, probe_factors=(4.0, 8.0))
    sw = rates.sweep(dom, dm.annulus_data(dom, "outer"), (1.0, 0.0), [1.3, 1.5, 1.4], opts)
    ps = [r.p for r in sw.rows]
    assert ps == sorted(ps, reverse=True)
    dv = [r.derivative for r in sw.rows]
    assert dv[0] < dv[1] < dv[2]  # derivative grows as p drops (oracle-backed trend)
