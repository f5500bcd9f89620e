"""Mixed-precision LSQR for discrete linear ill-posed problems.

The Lanczos bidiagonalization, the Givens QR update and the solution update
each run in their own floating-point format (native double, native single or
emulated ``t``-bit arithmetic).  The package also provides the classical
regularization test problems, early-stopping rules, SVD diagnostics and a
calculator for how low the bidiagonalization precision may go.
"""
from .precision import F32, F64, PrecisionSpec, emulated
from .problems import ProblemInstance, make_instance
from .lsqr import SolverConfig, SolverHistory, solve
from .stopping import Rule

__all__ = [
    "F32",
    "F64",
    "PrecisionSpec",
    "emulated",
    "ProblemInstance",
    "make_instance",
    "SolverConfig",
    "SolverHistory",
    "solve",
    "Rule",
]

__version__ = "0.1.0"
