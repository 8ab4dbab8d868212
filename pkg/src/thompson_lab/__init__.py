"""Numerical toolkit for the exponential identity ``e^{iX} e^{iY} = e^{i(UXU* + VYV*)}``.

Modules
-------
linalg_core    Hermitian/unitary kernels, exponential, principal logarithm, Frechet derivative.
horn           Horn triple generation and the eigenvalue-inequality check.
solver         Search for the unitaries ``U, V`` (plus verification and dilation).
rearrangement  Step functions, decreasing rearrangements, branch reduction.
compact_sim    Finite-rank truncation pipeline for compact operators.
factor_sim     Spectral-distribution simulation with the integral Horn system.
cli            Command-line entry point (``thompson-lab``).
"""

from . import compact_sim, factor_sim, hmat, horn, linalg_core, rearrangement, solver
from .config import TOL, Tolerances
from .solver import SolveOptions, SolveReport, solve, verify

__version__ = "0.1.0"

__all__ = [
    "TOL",
    "SolveOptions",
    "SolveReport",
    "Tolerances",
    "compact_sim",
    "factor_sim",
    "hmat",
    "horn",
    "linalg_core",
    "rearrangement",
    "solve",
    "solver",
    "verify",
]
