"""Backward Euler solver for operator Riccati equations in Hilbert-Schmidt coordinates.

The package is organised bottom-up:

``gelfand``
    Gram-matrix triples, Hilbert-Schmidt norms and spectral utilities.
``resolvents``
    Lyapunov and quadratic resolvents and the Yosida operator.
``are_solver``
    Maximal solutions of the algebraic Riccati equation.
``stepper``
    Coefficient paths, problems, backward Euler steps and interpolants.
``problems``
    Reference problem generators and scalar oracles.
``verify``
    Energy estimate, cone, convergence, stability and resolvent checks.
``cli_io`` / ``cli``
    Configuration files, deterministic outputs and the ``riccati-hs`` command.
"""

__version__ = "0.1.0"

from .are_solver import AreMode, AreOptions, AreReport, continuation_solve, newton_kleinman, solve_are
from .gelfand import GelfandTriple, build_triple, hs_inner, hs_norm, identity_triple, v_norm, vstar_norm
from .problems import ProblemSpec, make_problem, scalar_oracle
from .stepper import RiccatiProblem, Trajectory, backward_euler_step, eval_interpolants, integrate

__all__ = [
    "AreMode",
    "AreOptions",
    "AreReport",
    "GelfandTriple",
    "ProblemSpec",
    "RiccatiProblem",
    "Trajectory",
    "backward_euler_step",
    "build_triple",
    "continuation_solve",
    "eval_interpolants",
    "hs_inner",
    "hs_norm",
    "identity_triple",
    "integrate",
    "make_problem",
    "newton_kleinman",
    "scalar_oracle",
    "solve_are",
    "v_norm",
    "vstar_norm",
]
