"""Numerical solver and verification toolkit for the L^p Christoffel-Minkowski problem

    sigma_k(Hess u + (u + eps) g) = u^p0 f   on S^n,

with the continuity method in the data, an eps-regularization march towards
degenerate solutions, and monitors for the a priori estimates and integral
identities that accompany the equation.
"""

from . import diagnostics, geometry, problem, solver, spheregrid, symfun
from .errors import *  # noqa: F401,F403
from .problem import ProblemSpec, check_f_convexity, closed_form_f, make_spec, residual
from .solver import SolveOptions, SolveReport, continuation_solve, epsilon_continuation, newton_solve
from .spheregrid import ScalarField, build_grid

__version__ = "0.1.0"
