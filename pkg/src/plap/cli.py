"""Experiment runner.

Subcommands: radial, solve, sweep, fit, game, cylinder-check, repro.
Every run key can come from a config file (`key = value` lines, `#` comments)
or a `--key` flag; flags override the file, and unknown file keys are a hard
error.  Report subcommands write CSV (LF endings, 17 significant digits) and,
unless `plot = false`, a PNG figure next to it.

Exit codes: 0 success, 2 validation error, 3 non-convergence under --strict.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import critical as cyl
from . import domain as dm
from . import figures as figs
from . import game as gm
from . import rates
from .radial import RadialProfile, radial_derivative, radial_value
from .solver import NODE_EXTERIOR, discretize, solve


class CliError(Exception):
    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# typed key schema shared by config files and flags
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Key:
    name: str
    kind: str      # int | float | str | bool | floats | point | maybe_float
    default: object
    help: str
    required: bool = False


def _conv_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


_CONVERT = {
    "int": lambda s: int(s),
    "float": lambda s: float(s),
    "str": lambda s: s,
    "bool": _conv_bool,
    "floats": lambda s: [float(t) for t in s.replace(",", " ").split()],
    "point": lambda s: np.array([float(t) for t in s.replace(",", " ").split()]),
    "maybe_float": lambda s: None if s.strip().lower() in ("none", "auto") else float(s),
}


def _default_seed() -> int:
    return int(os.environ.get("PLAP_SEED", "0"))


def _default_threads() -> int:
    return os.cpu_count() or 1


def parse_config_file(path: str) -> dict:
    raw = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read config file {path}: {e}")
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def resolve_config(schema, args, config_path: Optional[str]) -> dict:
    by_name = {k.name: k for k in schema}
    cfg = {k.name: (k.default() if callable(k.default) else k.default) for k in schema}
    if config_path:
        raw = parse_config_file(config_path)
        for key, value in raw.items():
            if key not in by_name:
                raise CliError(f"unknown config key '{key}'")
            try:
                cfg[key] = _CONVERT[by_name[key].kind](value)
            except ValueError as e:
                raise CliError(f"config key '{key}': {e}")
    for k in schema:
        flag_val = getattr(args, k.name, None)
        if flag_val is not None:
            try:
                cfg[k.name] = _CONVERT[k.kind](flag_val)
            except ValueError as e:
                raise CliError(f"flag --{k.name.replace('_', '-')}: {e}")
    for k in schema:
        if k.required and cfg[k.name] is None:
            raise CliError(f"missing required key '{k.name}'")
    return cfg


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "-1"
    return f"{float(x):.17g}"


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _fig_path(out: str) -> str:
    return str(Path(out).with_suffix(".png"))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _common_keys(seed=True):
    keys = [
        Key("out", "str", None, "output CSV path"),
        Key("plot", "bool", True, "render a PNG next to the CSV"),
        Key("threads", "int", _default_threads, "worker count; 1 is the serial reference"),
        Key("strict", "bool", False, "exit 3 on non-convergence"),
    ]
    if seed:
        keys.append(Key("seed", "int", _default_seed, "RNG seed (env PLAP_SEED fallback)"))
    return keys


RADIAL_KEYS = [
    Key("p", "float", None, "exponent in (1, 2]", required=True),
    Key("d", "int", None, "dimension", required=True),
    Key("r0", "float", None, "inner radius", required=True),
    Key("r1", "float", None, "outer radius", required=True),
    Key("v0", "float", 0.0, "value at r0"),
    Key("v1", "float", 1.0, "value at r1"),
    Key("at", "maybe_float", None, "print the profile value at this radius"),
    Key("samples", "int", 201, "rows in the CSV profile table"),
] + _common_keys(seed=False)


def cmd_radial(cfg) -> int:
    prof = RadialProfile(cfg["p"], cfg["d"], cfg["r0"], cfg["r1"], cfg["v0"], cfg["v1"])
    if cfg["at"] is not None:
        print(f"{radial_value(prof, cfg['at']):.6f}")
    if cfg["out"]:
        r = np.linspace(prof.r0, prof.r1, cfg["samples"])
        rows = zip(r, radial_value(prof, r), radial_derivative(prof, r))
        write_csv(cfg["out"], ["r", "u", "du_dr"], rows)
        if cfg["plot"]:
            figs.radial_figure(prof, _fig_path(cfg["out"]))
        print(f"radial: wrote {cfg['out']}")
    elif cfg["at"] is None:
        print("radial: nothing to do (give --at or --out)")
    return 0


SOLVE_KEYS = [
    Key("domain", "str", None, "domain spec, e.g. 'annulus 1.0 2.0 2'", required=True),
    Key("boundary", "str", None, "boundary data name, e.g. 'outer'", required=True),
    Key("p", "float", None, "exponent in (1, 2]", required=True),
    Key("n", "int", None, "grid nodes per unit length", required=True),
    Key("delta", "float", 1e-6, "gradient regularization"),
    Key("tol", "float", 1e-8, "outer max-change tolerance"),
    Key("max_iter", "int", 200, "max lagged-diffusivity iterations"),
    Key("mollify", "maybe_float", None, "optional boundary mollification width"),
] + _common_keys(seed=False)


def _solution_rows(sol):
    g = sol.grid
    pts = g.node_points()
    mask = (g.node_class != NODE_EXTERIOR).ravel()
    vals = sol.values.ravel()
    for i in np.flatnonzero(mask):
        yield (*pts[i], vals[i])


def cmd_solve(cfg) -> int:
    dom = dm.make_builtin(cfg["domain"])
    F = dm.make_boundary(cfg["boundary"], dom)
    grid = discretize(dom, F, cfg["n"], mollify=cfg["mollify"])
    sol = solve(grid, cfg["p"], delta=cfg["delta"], tol=cfg["tol"],
                max_iter=cfg["max_iter"])
    if cfg["out"]:
        coord_names = ["x", "y", "z"][: dom.dim] if dom.dim <= 3 else [
            f"x{i}" for i in range(dom.dim)]
        write_csv(cfg["out"], coord_names + ["u"], _solution_rows(sol))
        if cfg["plot"]:
            figs.solution_figure(sol, _fig_path(cfg["out"]))
    print(f"solve: p={cfg['p']:g} n={cfg['n']} iterations={sol.iterations} "
          f"residual={sol.residual:.3e} converged={sol.converged}")
    if cfg["strict"] and not sol.converged:
        return 3
    return 0


SWEEP_KEYS = [
    Key("domain", "str", None, "domain spec", required=True),
    Key("boundary", "str", None, "boundary data name", required=True),
    Key("x0", "point", None, "boundary point, comma separated", required=True),
    Key("p_list", "floats", None, "comma-separated p values", required=True),
    Key("n", "int", 128, "grid nodes per unit length"),
    Key("delta", "float", 1e-6, "gradient regularization"),
    Key("tol", "float", 1e-6, "outer max-change tolerance"),
    Key("max_iter", "int", 500, "max lagged-diffusivity iterations"),
    Key("probe_factors", "floats", [8.0, 16.0], "derivative probe offsets, in grid spacings"),
    Key("mollify", "maybe_float", None, "optional boundary mollification width"),
] + _common_keys(seed=False)


def cmd_sweep(cfg) -> int:
    dom = dm.make_builtin(cfg["domain"])
    F = dm.make_boundary(cfg["boundary"], dom)
    opts = rates.SolverOpts(n=cfg["n"], delta=cfg["delta"], tol=cfg["tol"],
                            max_iter=cfg["max_iter"],
                            probe_factors=tuple(cfg["probe_factors"]),
                            mollify=cfg["mollify"])
    sw = rates.sweep(dom, F, cfg["x0"], cfg["p_list"], opts)
    if cfg["out"]:
        rows = [(r.p, r.derivative, r.grid_n, r.h_used, r.residual, r.converged)
                for r in sw.rows]
        write_csv(cfg["out"], ["p", "derivative", "grid_n", "h", "residual", "converged"], rows)
        if cfg["plot"]:
            figs.sweep_figure(sw, _fig_path(cfg["out"]))
    n_bad = sum(not r.converged for r in sw.rows)
    print(f"sweep: {len(sw.rows)} rows, {n_bad} not converged")
    if cfg["strict"] and n_bad:
        return 3
    return 0


FIT_KEYS = [
    Key("input", "str", None, "sweep CSV to fit", required=True),
] + _common_keys(seed=False)


def _read_sweep_csv(path) -> rates.SweepResult:
    try:
        lines = Path(path).read_text().strip().splitlines()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}")
    header = lines[0].split(",")
    expected = ["p", "derivative", "grid_n", "h", "residual", "converged"]
    if header != expected:
        raise CliError(f"{path}: expected header {','.join(expected)}")
    rows = []
    for line in lines[1:]:
        f = line.split(",")
        rows.append(rates.SweepRow(float(f[0]), float(f[1]), int(f[2]),
                                   float(f[3]), float(f[4]), f[5] == "1"))
    return rates.SweepResult(rows)


def cmd_fit(cfg) -> int:
    sw = _read_sweep_csv(cfg["input"])
    pw = rates.fit_power(sw)
    ex = rates.fit_exponential(sw)
    label = rates.classify(sw)
    if cfg["out"]:
        rows = [(f.model, f.amplitude, f.exponent_or_rate, f.r_squared, label)
                for f in (pw, ex)]
        with open(cfg["out"], "w", newline="") as f:
            f.write("model,amplitude,rate,r2,classification\n")
            for model, amp, rate, r2, lab in rows:
                f.write(f"{model},{_fmt(amp)},{_fmt(rate)},{_fmt(r2)},{lab}\n")
        if cfg["plot"]:
            figs.fit_figure(sw, pw, ex, label, _fig_path(cfg["out"]))
    print(f"fit: power slope {pw.exponent_or_rate:.4f} (r2 {pw.r_squared:.4f}), "
          f"exp rate {ex.exponent_or_rate:.4f} (r2 {ex.r_squared:.4f}) -> {label}")
    return 0


GAME_KEYS = [
    Key("domain", "str", "cylinder 1 1.0 1.0", "game domain spec"),
    Key("payoff", "str", "ramp-top", "boundary payoff name"),
    Key("p", "float", 1.5, "exponent in (1, 2]"),
    Key("epsilon", "float", 0.05, "step size"),
    Key("start", "point", np.array([0.0, 0.5]), "initial state"),
    Key("c", "maybe_float", None, "counter-strategy constant; auto = capped 8Hd/C1^2"),
    Key("tilt", "bool", False, "run under the tilted coin law"),
    Key("n_traj", "int", 1000, "number of trajectories"),
    Key("max_steps", "maybe_float", None, "truncation cap; auto = 50 T0"),
    Key("opponent", "str", "pull-down", "player II strategy: pull-down or zero"),
    Key("martingale_out", "str", None, "CSV path for the checkpoint report (tilted runs)"),
] + _common_keys(seed=True)


def _game_setup(cfg):
    dom = dm.make_builtin(cfg["domain"])
    payoff = dm.make_boundary(cfg["payoff"], dom)
    d = dom.dim
    start = np.asarray(cfg["start"], dtype=float)
    if len(start) != d:
        raise CliError(f"start point has dimension {len(start)}, domain needs {d}")
    H = float(dom.bbox[1][-1] - dom.bbox[0][-1])
    h = float(start[-1] - dom.bbox[0][-1])
    c = cfg["c"]
    if c is None:
        c = gm.usable_tilt(d, H, h, cfg["p"], cfg["epsilon"])
    max_steps = cfg["max_steps"]
    if max_steps is None:
        max_steps = gm.default_max_steps(cfg["p"], cfg["epsilon"], c, H, h)
    cfg_obj = gm.GameConfig(
        p=cfg["p"], d=d, epsilon=cfg["epsilon"], domain=dom, payoff=payoff,
        start=start, max_steps=int(max_steps), seed=cfg["seed"],
        tilt_c=c if cfg["tilt"] else None)
    if cfg["opponent"] == "pull-down":
        down = np.zeros(d)
        down[-1] = -1.0
        sII = gm.pull_strategy(down, cfg["epsilon"])
    elif cfg["opponent"] == "zero":
        sII = gm.zero_strategy(d)
    else:
        raise CliError(f"unknown opponent '{cfg['opponent']}'")
    up = np.zeros(d)
    up[-1] = 1.0
    sI = gm.counter_strategy(sII, c, cfg["epsilon"], cfg["p"], up)
    return cfg_obj, sI, sII, c


def cmd_game(cfg) -> int:
    game_cfg, sI, sII, c = _game_setup(cfg)
    trajs = gm.run_games(game_cfg, sI, sII, cfg["n_traj"], threads=cfg["threads"])
    payoffs = np.array([t.payoff for t in trajs])
    mean = float(payoffs.mean())
    se = float(payoffs.std(ddof=1) / math.sqrt(len(payoffs))) if len(payoffs) > 1 else 0.0
    if cfg["out"]:
        rows = [(t.traj_index, t.tau if t.tau is not None else -1, t.payoff,
                 t.truncated, t.Q[-1]) for t in trajs]
        write_csv(cfg["out"], ["traj", "tau", "payoff", "truncated", "final_Q"], rows)
    if cfg["martingale_out"]:
        if not cfg["tilt"]:
            raise CliError("martingale_out requires tilt = true")
        rep = gm.martingale_report(trajs, game_cfg)
        rows = zip(rep.checkpoints, rep.mean_M, rep.se_M, rep.mean_N, rep.se_N,
                   rep.mean_Q, rep.se_Q)
        write_csv(cfg["martingale_out"],
                  ["checkpoint", "mean_M", "se_M", "mean_N", "se_N", "mean_Q", "se_Q"],
                  rows)
        if cfg["plot"]:
            figs.martingale_figure(rep, _fig_path(cfg["martingale_out"]))
    n_trunc = int(sum(t.truncated for t in trajs))
    print(f"game: c={c:g} tilt={cfg['tilt']} mean payoff {mean:.5f} +- {se:.5f} "
          f"({n_trunc} truncated)")
    return 0


CYL_KEYS = [
    Key("p", "float", None, "exponent in (1, 2)", required=True),
    Key("d", "int", 1, "cross-section dimension of the unit cylinder"),
    Key("n", "int", 256, "grid nodes per unit length"),
    Key("c1", "float", cyl.C1_DEFAULT, "lower band constant"),
    Key("slack", "float", 0.1, "band slack as a fraction of band width"),
    Key("delta", "float", 1e-6, "gradient regularization"),
    Key("tol", "float", 1e-8, "outer max-change tolerance"),
    Key("max_iter", "int", 300, "max lagged-diffusivity iterations"),
] + _common_keys(seed=False)


def cmd_cylinder_check(cfg) -> int:
    dom = dm.cylinder(cfg["d"], 1.0, 1.0)
    F = dm.cylinder_sides_top(dom)
    grid = discretize(dom, F, cfg["n"])
    sol = solve(grid, cfg["p"], delta=cfg["delta"], tol=cfg["tol"],
                max_iter=cfg["max_iter"])
    report = cyl.verify_band(sol, cfg["p"], cfg["d"], c1=cfg["c1"], slack=cfg["slack"])
    mono = cyl.axis_monotonicity(sol)
    if cfg["out"]:
        rows = zip(report.y, report.u, report.lower, report.upper, report.passed)
        write_csv(cfg["out"], ["y", "u", "lower", "upper", "pass"], rows)
        if cfg["plot"]:
            figs.band_figure(report, _fig_path(cfg["out"]))
    n_fail = int(np.count_nonzero(~report.passed))
    print(f"cylinder-check: p={cfg['p']:g} band {'PASS' if report.all_pass else f'FAIL ({n_fail} nodes)'}, "
          f"axis ratio {'non-increasing' if mono.passed else 'INCREASES'} "
          f"(max step {mono.max_increase:.2e})")
    if cfg["strict"] and not sol.converged:
        return 3
    return 0


REPRO_KEYS = [
    Key("criterion", "str", None, "acceptance criterion id, A1..A11", required=True),
    Key("out_dir", "str", None, "directory for artifacts written by the criterion"),
]


def cmd_repro(cfg) -> int:
    from . import _criteria

    name = cfg["criterion"].upper()
    try:
        ok, detail = _criteria.run_criterion(name)
    except KeyError:
        raise CliError(f"unknown criterion '{cfg['criterion']}' "
                       f"(known: {', '.join(_criteria.CRITERIA)})")
    print(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
    return 0 if ok else 1


COMMANDS = {
    "radial": ("evaluate the closed-form radial profile", RADIAL_KEYS, cmd_radial),
    "solve": ("solve the Dirichlet problem on a grid", SOLVE_KEYS, cmd_solve),
    "sweep": ("boundary derivative sweep over p", SWEEP_KEYS, cmd_sweep),
    "fit": ("fit rate models to a sweep CSV", FIT_KEYS, cmd_fit),
    "game": ("simulate tug-of-war with noise", GAME_KEYS, cmd_game),
    "cylinder-check": ("solve the critical cylinder and check the band", CYL_KEYS, cmd_cylinder_check),
    "repro": ("run one acceptance criterion end to end", REPRO_KEYS, cmd_repro),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plap",
                                 description="p-harmonic boundary derivative laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (help_text, schema, _) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="config file with 'key = value' lines")
        for key in schema:
            shown = key.default() if callable(key.default) else key.default
            sp.add_argument("--" + key.name.replace("_", "-"), dest=key.name,
                            metavar="V",
                            help=f"{key.help} [{key.kind}"
                                 f"{', required' if key.required else f', default: {shown}'}]")
    return ap


def run(argv) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _, schema, fn = COMMANDS[args.command]
    try:
        cfg = resolve_config(schema, args, args.config)
        return fn(cfg)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
