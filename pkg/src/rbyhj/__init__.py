"""Pathwise second-derivative bounds for stochastic Hamilton-Jacobi equations.

Grid functions and exact Hopf-Lax steps, monotone deterministic steps,
driving signals, the reflected bound process with its boundary tests, and
a splitting driver that checks measured curvature against the bound.
"""
from .bounds import BoundCurve, bound_curve, drift_for, initial_levels, lipschitz_decay
from .grid import GridFn, line_grid, lipschitz_norm, oscillation, periodic_grid, second_diff
from .hopf_lax import apply_signed, inf_convolution, sup_convolution
from .paths import DrivingPath, brownian, deterministic, fractional_brownian
from .piecewise import PiecewiseQuadratic, apply_signed_exact
from .pde_step import FirstOrder, FullyNonlinear1D, Quasilinear, Zero, evolve_F, p_laplace
from .reflected import discrete_scheme, feller_classify, skorokhod_solve
from .splitting import optimality_experiment, trotter_kato, verify_main_bound

__version__ = "0.1.0"

__all__ = [
    "BoundCurve", "bound_curve", "drift_for", "initial_levels", "lipschitz_decay",
    "GridFn", "line_grid", "lipschitz_norm", "oscillation", "periodic_grid", "second_diff",
    "apply_signed", "inf_convolution", "sup_convolution",
    "PiecewiseQuadratic", "apply_signed_exact",
    "DrivingPath", "brownian", "deterministic", "fractional_brownian",
    "FirstOrder", "FullyNonlinear1D", "Quasilinear", "Zero", "evolve_F", "p_laplace",
    "discrete_scheme", "feller_classify", "skorokhod_solve",
    "optimality_experiment", "trotter_kato", "verify_main_bound",
]
