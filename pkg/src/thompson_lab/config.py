"""Numerical tolerances shared across the package."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    hermiticity: float = 1e-12
    unitarity: float = 1e-10
    reconstruction: float = 1e-10
    log_roundtrip: float = 1e-9
    branch_sensitive: float = 1e-12
    horn: float = 1e-9
    branch_trace: float = 1e-8
    subspace_drop: float = 1e-10
    distribution: float = 1e-12
    horn_max_n: int = 8
    eig_max_tries: int = 3


TOL = Tolerances()
