"""End-to-end acceptance experiments, one per criterion id A1..A11.

Each function returns (passed, detail) and is reachable both from
`plap repro --criterion <id>` and from the acceptance test module.  Solutions
shared between criteria (the annulus and cylinder reference solves) are
cached per process.
"""

from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path

import numpy as np

from . import cli
from . import critical as cyl
from . import domain as dm
from . import game as gm
from . import rates
from .radial import RadialProfile, hitting_lower_bound, radial_value
from .solver import (NODE_INTERIOR, boundary_derivative, compare, discretize,
                     solve)

SEED = 20240801
_cache: dict = {}


def _annulus_solution(p: float):
    key = ("annulus", p)
    if key not in _cache:
        dom = dm.annulus(1.0, 2.0, 2)
        F = dm.annulus_data(dom, "outer")
        grid = _cache.setdefault(("annulus-grid",), discretize(dom, F, 256))
        _cache[key] = solve(grid, p, delta=1e-6, tol=1e-8, max_iter=400)
    return _cache[key]


def _cylinder_solution(p: float):
    key = ("cylinder", p)
    if key not in _cache:
        dom = dm.cylinder(1, 1.0, 1.0)
        F = dm.cylinder_sides_top(dom)
        grid = _cache.setdefault(("cylinder-grid",), discretize(dom, F, 256))
        _cache[key] = solve(grid, p, delta=1e-6, tol=1e-8, max_iter=400)
    return _cache[key]


def a1_radial_oracle_equivalence():
    """annulus(1,2,2), p in {1.3, 1.5, 2.0}, n=256: Linf(solver - closed form) <= 0.03."""
    dom = dm.annulus(1.0, 2.0, 2)
    errs = {}
    for p in (1.3, 1.5, 2.0):
        sol = _annulus_solution(p)
        grid = sol.grid
        pts = grid.node_points()
        mask = (grid.node_class == NODE_INTERIOR).ravel()
        r = np.linalg.norm(pts[mask], axis=1)
        oracle = radial_value(RadialProfile(p, 2, 1.0, 2.0, 0.0, 1.0), r)
        errs[p] = float(np.max(np.abs(sol.values.ravel()[mask] - oracle)))
    ok = all(e <= 0.03 for e in errs.values())
    detail = ", ".join(f"p={p}: Linf={e:.4f}" for p, e in errs.items()) + " (limit 0.03)"
    return ok, detail


def a2_boundary_derivative_oracle():
    """Same setup, p=1.5, x0=(1,0): derivative within 15% of the exact value 2."""
    sol = _annulus_solution(1.5)
    h = sol.grid.spacing
    dv = boundary_derivative(sol, sol.grid.domain, (1.0, 0.0), [16 * h, 32 * h])
    rel = abs(dv - 2.0) / 2.0
    return rel <= 0.15, f"derivative {dv:.4f} vs exact 2, relative error {rel:.3f} (limit 0.15)"


def a3_band():
    """Cylinder d=1, p in {1.2, 1.5}, n=256: band holds with 10% slack on (2/n, sqrt((p-1)/d)]."""
    results = {}
    for p in (1.2, 1.5):
        rep = cyl.verify_band(_cylinder_solution(p), p, 1, c1=cyl.C1_DEFAULT, slack=0.1)
        results[p] = (rep.all_pass, int(np.count_nonzero(~rep.passed)), len(rep.y))
    ok = all(r[0] for r in results.values())
    detail = ", ".join(f"p={p}: {'pass' if r[0] else f'{r[1]} violations'}/{r[2]} nodes"
                       for p, r in results.items())
    return ok, detail


def a4_axis_monotonicity():
    """Same solutions: u(0,y)/y non-increasing within 1e-3 per step."""
    results = {}
    for p in (1.2, 1.5):
        rep = cyl.axis_monotonicity(_cylinder_solution(p), tol=1e-3)
        results[p] = (rep.passed, rep.max_increase)
    ok = all(r[0] for r in results.values())
    detail = ", ".join(f"p={p}: max step increase {r[1]:.2e}" for p, r in results.items())
    return ok, detail


_SWEEP_PS = [1.5, 1.4, 1.3, 1.2, 1.1]


def _annulus_sweep(one_on: str, x0):
    key = ("sweep", one_on)
    if key not in _cache:
        dom = dm.annulus(1.0, 2.0, 2)
        F = dm.annulus_data(dom, one_on)
        opts = rates.SolverOpts(n=128, tol=1e-6, max_iter=600, probe_factors=(8.0, 16.0))
        _cache[key] = rates.sweep(dom, F, x0, _SWEEP_PS, opts)
    return _cache[key]


def a5_classify_explosion():
    """F=1 outer, x0 inner: classify -> Explosion with slope in [-1.3, -0.7], r2 >= 0.95."""
    sw = _annulus_sweep("outer", (1.0, 0.0))
    label = rates.classify(sw)
    pw = rates.fit_power(sw)
    ok = label == rates.EXPLOSION
    return ok, (f"classified {label}, power slope {pw.exponent_or_rate:.3f}, "
                f"r2 {pw.r_squared:.4f}")


def a6_classify_decay():
    """F=1 inner, x0 outer: ExponentialDecay, and derivative(1.1) <= derivative(1.5)/10."""
    sw = _annulus_sweep("inner", (2.0, 0.0))
    label = rates.classify(sw)
    ex = rates.fit_exponential(sw)
    dmap = {r.p: r.derivative for r in sw.rows}
    ratio_ok = dmap[1.1] <= dmap[1.5] / 10.0
    ok = label == rates.EXPONENTIAL_DECAY and ratio_ok
    return ok, (f"classified {label}, exp rate {ex.exponent_or_rate:.3f} "
                f"(r2 {ex.r_squared:.4f}); derivative(1.1)={dmap[1.1]:.5f} vs "
                f"derivative(1.5)/10={dmap[1.5] / 10:.5f}")


def a7_classify_critical():
    """Cylinder d=1, derivative at (0,0), p in {1.5..1.2}: power slope in [-0.65, -0.35]."""
    key = ("sweep", "cylinder")
    if key not in _cache:
        dom = dm.cylinder(1, 1.0, 1.0)
        F = dm.cylinder_sides_top(dom)
        opts = rates.SolverOpts(n=192, tol=1e-6, max_iter=600, probe_factors=(8.0, 16.0))
        _cache[key] = rates.sweep(dom, F, (0.0, 0.0), [1.5, 1.4, 1.3, 1.2], opts)
    sw = _cache[key]
    pw = rates.fit_power(sw)
    ok = -0.65 <= pw.exponent_or_rate <= -0.35
    return ok, f"power slope {pw.exponent_or_rate:.3f} (band [-0.65, -0.35]), r2 {pw.r_squared:.4f}"


def _hitting_game(tilted: bool) -> gm.GameConfig:
    dom = dm.cylinder(1, 1.0, 1.0)
    payoff = dm.cylinder_ramp_top(dom)
    p, eps = 1.5, 0.05
    c = gm.usable_tilt(2, 1.0, 0.5, p, eps)
    return gm.GameConfig(
        p=p, d=2, epsilon=eps, domain=dom, payoff=payoff, start=(0.0, 0.5),
        max_steps=gm.default_max_steps(p, eps, c, 1.0, 0.5), seed=SEED,
        tilt_c=c if tilted else None), c


def _hitting_strategies(c: float, eps: float, p: float):
    sII = gm.pull_strategy([0.0, -1.0], eps)
    sI = gm.counter_strategy(sII, c, eps, p, [0.0, 1.0])
    return sI, sII


def a8_hitting_bound():
    """Counter-strategy vs pull-down, 2e4 trajectories: mean payoff >= the explicit
    lower bound (astronomically small here) and >= 0.01 as a nondegeneracy floor.

    The analytic tilt constant 8Hd/C1^2 = 144 exceeds the mixture's validity
    at epsilon = 0.05 (2 c eps/(p-1) = 28.8 >= 1), so the capped constant is
    played; the bound is one-sided and holds for any admissible strategy."""
    cfg, c = _hitting_game(tilted=False)
    sI, sII = _hitting_strategies(c, cfg.epsilon, cfg.p)
    mean, se = gm.estimate_value(cfg, sI, sII, 20000)
    bound = hitting_lower_bound(1.5, 2, 1.0, 0.5)
    ok = mean >= bound and mean >= 0.01
    return ok, (f"mean payoff {mean:.4f} +- {se:.4f} vs bound {bound:.3e} "
                f"and floor 0.01 (c capped to {c:g} from 144)")


def a9_martingale_diagnostics():
    """Tilted run: mean M within 3se of 0.5, mean Q within 3se of 1 at every
    checkpoint, and mean N non-increasing up to 3se of the paired step."""
    cfg, c = _hitting_game(tilted=True)
    sI, sII = _hitting_strategies(c, cfg.epsilon, cfg.p)
    trajs = gm.run_games(cfg, sI, sII, 5000)
    rep = gm.martingale_report(trajs, cfg)
    m_ok = np.all(np.abs(rep.mean_M - 0.5) <= 3.0 * rep.se_M + 1e-15)
    q_ok = np.all(np.abs(rep.mean_Q - 1.0) <= 3.0 * rep.se_Q + 1e-15)
    diffs = np.diff(rep.samples_N, axis=0)
    d_mean = diffs.mean(axis=1)
    d_se = diffs.std(axis=1, ddof=1) / math.sqrt(diffs.shape[1])
    n_ok = np.all(d_mean <= 3.0 * d_se + 1e-15)
    ok = bool(m_ok and q_ok and n_ok)
    worst_m = float(np.max(np.abs(rep.mean_M - 0.5) - 3.0 * rep.se_M))
    worst_q = float(np.max(np.abs(rep.mean_Q - 1.0) - 3.0 * rep.se_Q))
    return ok, (f"M within 3se of 0.5: {bool(m_ok)} (worst excess {worst_m:.2e}), "
                f"Q within 3se of 1: {bool(q_ok)} (worst excess {worst_q:.2e}), "
                f"N non-increasing: {bool(n_ok)}; {len(rep.checkpoints)} checkpoints")


def a10_closed_form_constants():
    """tail_product(7, 1e6) = 0.2651 +- 5e-4; m_20 floor exactly 1/2; sign
    properties of the quadratic test on 1e5 samples."""
    tp = cyl.tail_product(7, 10 ** 6)
    tp_ok = abs(tp - 0.2651) <= 5e-4
    mk_ok = cyl.mk_floor(20) == 0.5
    rng = np.random.default_rng(SEED)
    sign_ok = True
    worst_super, worst_sub = -np.inf, np.inf
    for p in (1.1, 1.5, 1.9):
        for d in (1, 2, 3):
            m = 100000 // 9 + 1
            x = rng.standard_normal((m, d))
            x *= (rng.random((m, 1)) ** (1.0 / d)) / np.linalg.norm(x, axis=1, keepdims=True)
            # superharmonic family: b = d/(p-1), any a, any y
            y = rng.uniform(-3.0, 3.0, m)
            a = rng.uniform(0.0, 3.0 / math.sqrt(p - 1.0), m)
            b = d / (p - 1.0)
            vals = 8.0 * (np.sum(x * x, axis=1) * (d - b + p - 2.0)
                          + (a - b * y) ** 2 * (d - b * (p - 1.0)))
            worst_super = max(worst_super, float(vals.max()))
            sign_ok &= bool(np.all(vals <= 1e-8))
            # subharmonic condition: b = d/(2(p-1)), a >= b y_k + 1/sqrt(p-1)
            k = rng.integers(1, 11, m)
            yk = k * math.sqrt((p - 1.0) / d)
            b2 = d / (2.0 * (p - 1.0))
            a2 = b2 * yk + (p - 1.0) ** -0.5 + rng.uniform(0.0, 1.0, m)
            y2 = rng.uniform(0.0, 1.0, m) * yk
            vals2 = 8.0 * (np.sum(x * x, axis=1) * (d - b2 + p - 2.0)
                           + (a2 - b2 * y2) ** 2 * (d - b2 * (p - 1.0)))
            worst_sub = min(worst_sub, float(vals2.min()))
            sign_ok &= bool(np.all(vals2 >= -1e-8))
    ok = tp_ok and mk_ok and sign_ok
    return ok, (f"tail_product(7,1e6)={tp:.6f} (target 0.2651+-5e-4), "
                f"mk_floor(20)={cyl.mk_floor(20)}, sign checks: "
                f"max superharmonic {worst_super:.2e} (<=0), "
                f"min subharmonic {worst_sub:.2e} (>=0)")


def _random_arc_pair(dom, rng):
    """Two nested random arc indicators F1 <= F2 on the annulus boundary."""
    mid = 0.5 * (dom.params[0] + dom.params[1])

    def arcs():
        lo = rng.uniform(-math.pi, math.pi)
        width = rng.uniform(0.3, 2.0)
        extra = rng.uniform(0.1, 1.0)
        return (lo, lo + width), (lo - extra, lo + width + extra)

    (in1, in2), (out1, out2) = arcs(), arcs()

    def indicator(arc_inner, arc_outer, tag):
        def value(pts):
            pts = np.atleast_2d(pts)
            r = np.linalg.norm(pts, axis=1)
            th = np.arctan2(pts[:, 1], pts[:, 0])
            hit = np.zeros(len(pts), bool)
            for (lo, hi), sel in ((arc_inner, r < mid), (arc_outer, r >= mid)):
                span = ((th - lo) % (2 * math.pi)) <= (hi - lo)
                hit |= sel & span
            return hit.astype(float)
        return dm.BoundaryIndicator(value, tag)

    return indicator(in1, out1, "arcs-small"), indicator(in2, out2, "arcs-large")


def a11_property_suite():
    """Maximum principle, comparison monotonicity on 20 random nested data pairs,
    per-step noise invariants, and byte-identical CSV reproducibility including
    thread counts."""
    details = []
    ok = True

    # discrete maximum principle on a reference solve
    sol = _annulus_solution(1.3)
    mask = sol.grid.node_class == NODE_INTERIOR
    vmin, vmax = float(sol.values[mask].min()), float(sol.values[mask].max())
    mp_ok = vmin >= -1e-9 and vmax <= 1.0 + 1e-9
    ok &= mp_ok
    details.append(f"max principle [{vmin:.2e}, 1{vmax - 1.0:+.2e}]: {mp_ok}")

    # comparison monotonicity on random nested pairs
    rng = np.random.default_rng(SEED)
    dom = dm.annulus(1.0, 2.0, 2)
    comp_ok = True
    for _ in range(20):
        F1, F2 = _random_arc_pair(dom, rng)
        s1 = solve(discretize(dom, F1, 48), 1.5, tol=1e-8, max_iter=300)
        s2 = solve(discretize(dom, F2, 48), 1.5, tol=1e-8, max_iter=300)
        comp_ok &= compare(s1, s2)
    ok &= comp_ok
    details.append(f"comparison monotonicity 20 pairs: {comp_ok}")

    # per-step noise invariants on recorded trajectories
    cfg, c = _hitting_game(tilted=False)
    sI, sII = _hitting_strategies(c, cfg.epsilon, cfg.p)
    noise_ok = True
    scale = gm.noise_scale(cfg.p, cfg.d)
    for i in range(200):
        t = gm.run_game(cfg, sI, sII, i)
        dots = np.abs(np.einsum("ij,ij->i", t.moves, t.noises))
        mags = np.abs(np.linalg.norm(t.noises, axis=1)
                      - scale * np.linalg.norm(t.moves, axis=1))
        noise_ok &= bool(np.all(dots <= 1e-10) and np.all(mags <= 1e-10))
    ok &= noise_ok
    details.append(f"noise orthogonality/magnitude on every step of 200 games: {noise_ok}")

    # reproducibility: byte-identical CSV, and thread counts 1 vs max
    with tempfile.TemporaryDirectory() as td:
        paths = [str(Path(td) / f"run{i}.csv") for i in range(4)]
        base = ["solve", "--domain", "annulus 1.0 2.0 2", "--boundary", "outer",
                "--p", "1.5", "--n", "32", "--plot", "false"]
        assert cli.run(base + ["--out", paths[0], "--threads", "1"]) == 0
        assert cli.run(base + ["--out", paths[1], "--threads", "1"]) == 0
        rep_ok = Path(paths[0]).read_bytes() == Path(paths[1]).read_bytes()
        nmax = str(os.cpu_count() or 1)
        assert cli.run(base + ["--out", paths[2], "--threads", nmax]) == 0
        u1 = np.loadtxt(paths[0], delimiter=",", skiprows=1, usecols=2)
        u2 = np.loadtxt(paths[2], delimiter=",", skiprows=1, usecols=2)
        thr_ok = bool(np.max(np.abs(u1 - u2)) <= 1e-12)
        gargs = ["game", "--n-traj", "200", "--seed", "7", "--plot", "false"]
        assert cli.run(gargs + ["--out", paths[3]]) == 0
        first = Path(paths[3]).read_bytes()
        assert cli.run(gargs + ["--out", paths[3]]) == 0
        rep_ok &= Path(paths[3]).read_bytes() == first
    ok &= rep_ok and thr_ok
    details.append(f"byte-identical CSV: {rep_ok}, threads 1 vs max within 1e-12: {thr_ok}")

    return bool(ok), "; ".join(details)


CRITERIA = {
    "A1": a1_radial_oracle_equivalence,
    "A2": a2_boundary_derivative_oracle,
    "A3": a3_band,
    "A4": a4_axis_monotonicity,
    "A5": a5_classify_explosion,
    "A6": a6_classify_decay,
    "A7": a7_classify_critical,
    "A8": a8_hitting_bound,
    "A9": a9_martingale_diagnostics,
    "A10": a10_closed_form_constants,
    "A11": a11_property_suite,
}


def run_criterion(name: str):
    return CRITERIA[name]()
