"""p-harmonic boundary derivative laboratory.

A deterministic grid solver and a tug-of-war-with-noise simulator for
p-harmonic functions with {0,1} boundary data, plus the closed-form radial
oracles, the critical-cylinder calculus, and the rate fits that classify the
boundary derivative as p decreases to 1.
"""

from .critical import (QuadraticTest, axis_monotonicity, delta_pN_quadratic,
                       f_barrier, lower_band, mk_floor, tail_product,
                       upper_band, verify_band)
from .domain import (BoundaryFunction, BoundaryIndicator, Domain, annulus,
                     annulus_data, box, check_enclosing_ball,
                     check_hyperplane_separation, constant_data, cylinder,
                     cylinder_ramp_top, cylinder_sides_top, cylinder_top_only,
                     make_boundary, make_builtin)
from .game import (GameConfig, Strategy, Trajectory, c1_constant,
                   counter_strategy, default_max_steps, estimate_value,
                   martingale_report, noise_scale, proof_tilt, pull_strategy,
                   run_game, run_games, sample_noise, usable_tilt,
                   zero_strategy)
from .radial import (RadialProfile, barrier_lower, gamma, hitting_lower_bound,
                     hitting_log_lower_bound, radial_derivative, radial_value)
from .rates import (RateFit, SolverOpts, SweepResult, SweepRow, classify,
                    fit_exponential, fit_power, sweep)
from .solver import (Grid, GridSolution, boundary_derivative, compare,
                     discretize, interpolate, solve, weak_residual)

__version__ = "0.1.0"
