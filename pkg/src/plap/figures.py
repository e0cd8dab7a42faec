"""Figure rendering for the CLI report paths.

Every report subcommand writes its delimited output and, unless plotting is
disabled, a PNG next to it.  All rendering targets files through the Agg
backend; nothing here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .radial import RadialProfile, radial_derivative, radial_value

DPI = 150


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def radial_figure(prof: RadialProfile, path):
    r = np.linspace(prof.r0, prof.r1, 400)
    u = radial_value(prof, r)
    du = radial_derivative(prof, r)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.plot(r, u)
    ax1.set_xlabel("r")
    ax1.set_ylabel("u(r)")
    ax1.set_title(f"radial profile, p={prof.p:g}, d={prof.d}")
    ax2.plot(r, du)
    ax2.set_xlabel("r")
    ax2.set_ylabel("du/dr")
    ax2.set_title("derivative")
    return _finish(fig, path)


def solution_figure(sol, path):
    """2D heatmap of a grid solution (other dimensions are skipped)."""
    if sol.grid.dim != 2:
        return None
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    xs, ys = sol.grid.axes()
    im = ax.pcolormesh(xs, ys, sol.values.T, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label="u")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"p={sol.p:g}, iterations={sol.iterations}")
    return _finish(fig, path)


def sweep_figure(sw, path):
    rows = [r for r in sw.rows if r.derivative > 0]
    pm1 = np.array([r.p - 1.0 for r in rows])
    dv = np.array([r.derivative for r in rows])
    conv = np.array([r.converged for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(pm1[conv], dv[conv], "o-", label="converged")
    if (~conv).any():
        ax.loglog(pm1[~conv], dv[~conv], "x", color="crimson", label="not converged")
        ax.legend()
    ax.set_xlabel("p - 1")
    ax.set_ylabel("boundary derivative")
    ax.set_title("derivative vs p - 1")
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def fit_figure(sw, power_fit, exp_fit, classification, path):
    rows = sw.converged_rows()
    pm1 = np.array([r.p - 1.0 for r in rows])
    dv = np.array([r.derivative for r in rows])
    grid = np.linspace(pm1.min(), pm1.max(), 200)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogy(pm1, dv, "ko", label="data")
    ax.semilogy(grid, power_fit.amplitude * grid ** power_fit.exponent_or_rate,
                label=f"power, slope {power_fit.exponent_or_rate:.3f}, r2 {power_fit.r_squared:.3f}")
    ax.semilogy(grid, exp_fit.amplitude * np.exp(exp_fit.exponent_or_rate / grid),
                "--", label=f"exp, rate {exp_fit.exponent_or_rate:.3f}, r2 {exp_fit.r_squared:.3f}")
    ax.set_xlabel("p - 1")
    ax.set_ylabel("boundary derivative")
    ax.set_title(f"classification: {classification}")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def band_figure(report, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(report.y, report.u, "k.", ms=3, label="u(0, y)")
    ax.plot(report.y, report.lower, label="lower band (with offsets)")
    ax.plot(report.y, report.upper, label="upper band (with offsets)")
    bad = ~report.passed
    if bad.any():
        ax.plot(report.y[bad], report.u[bad], "rx", label="violations")
    ax.set_xlabel("y")
    ax.set_ylabel("value on the axis")
    ax.set_title(f"band check, c1={report.c1:g}, slack={report.slack:g}")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def martingale_figure(report, path):
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    for ax, name, mean, se in [
        (axes[0], "M", report.mean_M, report.se_M),
        (axes[1], "N", report.mean_N, report.se_N),
        (axes[2], "Q", report.mean_Q, report.se_Q),
    ]:
        ax.errorbar(report.checkpoints, mean, yerr=3 * se, fmt="o-", ms=3, capsize=2)
        ax.set_xscale("symlog", linthresh=1)
        ax.set_xlabel("checkpoint n")
        ax.set_title(f"mean {name} (3 se bars)")
        ax.grid(alpha=0.3)
    return _finish(fig, path)
