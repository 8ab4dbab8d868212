"""Spectral-distribution (lambda-function) simulation for finite factors.

Non-increasing step functions on ``[0, 1)`` stand in for the spectral
distributions of self-adjoint elements.  Matrix models are obtained by
midpoint sampling plus seeded unitary conjugation; the limit function is
read off at the largest size and checked against the moment identities and
the integral form of the Horn system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import horn, solver
from .config import TOL
from .linalg_core import hermitian, principal_log_unitary, random_unitary, unitary_exp
from .rearrangement import (
    DistributionMismatch,
    StepFunction,
    branch_reduce,
    decreasing_rearrangement,
    step_lambda,
)

GRID_POINTS = 256


@dataclass(frozen=True)
class SigmaSet:
    n: int
    I: tuple
    intervals: tuple  # merged [a, b) pairs with Fraction endpoints

    @property
    def length(self):
        return sum((b - a for a, b in self.intervals), Fraction(0))

    def integrate(self, f):
        return math.fsum(f.integrate(a, b) for a, b in self.intervals)


def sigma_set(I, n):
    """``union_{i in I} [(i-1)/n, i/n)`` with adjacent cells merged."""
    I = tuple(sorted(set(int(i) for i in I)))
    if n < 1 or any(not 1 <= i <= n for i in I):
        raise ValueError(f"indices {I} out of range 1..{n}")
    intervals = []
    for i in I:
        a, b = Fraction(i - 1, n), Fraction(i, n)
        if intervals and intervals[-1][1] == a:
            intervals[-1] = (intervals[-1][0], b)
        else:
            intervals.append((a, b))
    return SigmaSet(n, I, tuple(intervals))


@dataclass
class IntegralHornCertificate:
    feasible: bool
    trace_gap: float
    violations: list  # (n, HornTriple, slack)
    checked_count: int

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "trace_gap": self.trace_gap,
            "checked_count": self.checked_count,
            "violations": [dict(t.to_dict(), level=n, slack=s) for n, t, s in self.violations],
        }


def cell_integrals(f, n):
    """Integrals of ``f`` over ``[(i-1)/n, i/n)``, i = 1..n."""
    return np.array([f.integrate(Fraction(i, n), Fraction(i + 1, n)) for i in range(n)])


def integral_horn_check(u, v, w, max_n, tol=TOL.horn):
    """Integral Horn system for non-increasing step functions ``u, v, w``.

    Checks ``int u + int v = int w`` and, for every level ``n <= max_n`` and
    every Horn triple at that level, ``int_{sigma_I} u + int_{sigma_J} v >=
    int_{sigma_K} w``.  The trace gap is ``int w - int u - int v``.
    """
    for name, f in (("u", u), ("v", v), ("w", w)):
        if not f.nonincreasing:
            raise ValueError(f"{name} must be non-increasing")
    if max_n > horn.max_n():
        raise horn.HornSizeError(f"max_n={max_n} exceeds the Horn generation cap {horn.max_n()}")
    trace_gap = w.integral() - u.integral() - v.integral()
    violations = []
    checked = 0
    for n in range(1, max_n + 1):
        triples, MI, MJ, MK = horn.horn_system(n)
        s = MI @ cell_integrals(u, n) + MJ @ cell_integrals(v, n) - MK @ cell_integrals(w, n)
        checked += len(triples)
        violations += [(n, triples[k], float(s[k])) for k in np.flatnonzero(s < -tol)]
    feasible = abs(trace_gap) <= tol and not violations
    return IntegralHornCertificate(feasible, float(trace_gap), violations, checked)


def discretize(lam, m):
    """Diagonal ``m x m`` matrix of midpoint samples ``lam((j - 1/2)/m)``, non-increasing."""
    if m < 1:
        raise ValueError("m must be positive")
    samples = [lam.value_at(Fraction(2 * j - 1, 2 * m)) for j in range(1, m + 1)]
    return np.diag(np.sort(samples)[::-1]).astype(complex)


def moments(f, K):
    """``int_0^1 e^{ik f(t)} dt`` for k = 1..K."""
    w = np.array([float(x) for x in f.widths])
    v = np.array(f.values)
    return np.array([np.sum(w * np.exp(1j * k * v)) for k in range(1, K + 1)])


def grid():
    return (np.arange(GRID_POINTS) + 0.5) / GRID_POINTS


@dataclass
class FactorLevel:
    m: int
    residual: float
    success: bool
    restarts_used: int
    lambda_D: StepFunction = field(repr=False)
    lambda_C: StepFunction = field(repr=False)
    moment_gaps: list = field(default_factory=list)
    level_moment_gaps: list = field(default_factory=list)
    cauchy_sup: float | None = None
    cauchy_mean: float | None = None


@dataclass
class FactorReport:
    levels: list
    f: StepFunction
    reduced: StepFunction | None
    reduce_error: str | None
    horn: IntegralHornCertificate | None

    @property
    def top_moment_gaps(self):
        return [max(lv.moment_gaps) for lv in self.levels]

    def to_dict(self):
        return {
            "levels": [
                {
                    "m": lv.m,
                    "residual": lv.residual,
                    "success": lv.success,
                    "restarts_used": lv.restarts_used,
                    "moment_gaps": lv.moment_gaps,
                    "level_moment_gaps": lv.level_moment_gaps,
                    "cauchy_sup": lv.cauchy_sup,
                    "cauchy_mean": lv.cauchy_mean,
                    "lambda_D": lv.lambda_D.to_dict(),
                    "lambda_C": lv.lambda_C.to_dict(),
                }
                for lv in self.levels
            ],
            "top_moment_gaps": self.top_moment_gaps,
            "f": self.f.to_dict(),
            "reduced_lambda_c": None if self.reduced is None else self.reduced.to_dict(),
            "reduce_error": self.reduce_error,
            "integral_horn": None if self.horn is None else self.horn.to_dict(),
        }


def matrix_model(lam_a, lam_b, m, seed=0, decommute=True):
    """Sampled pair ``(A, B)``; with ``decommute`` each is conjugated by a seeded Haar unitary."""
    A, B = discretize(lam_a, m), discretize(lam_b, m)
    if decommute:
        Ua = random_unitary(m, [seed, m, 0])
        Ub = random_unitary(m, [seed, m, 1])
        A = hermitian(Ua @ A @ Ua.conj().T)
        B = hermitian(Ub @ B @ Ub.conj().T)
    return A, B


def factor_pipeline(
    lam_a,
    lam_b,
    sizes,
    K_moments=5,
    max_n=4,
    seed=0,
    decommute=True,
    opts=None,
    angle_tol=1e-8,
    horn_tol=1e-9,
):
    """Matrix models at each size, per-size solves, limit function and checks.

    The limit ``f`` is the eigenvalue function of the exponent found at the
    largest size.  Reported per size: solver residual, moment gaps
    ``|int e^{ik lambda_C} - int e^{ik f}|`` (``lambda_C`` from the principal
    logarithm of ``e^{iA} e^{iB}``) and grid gaps between consecutive
    exponent eigenvalue functions.  Finally ``f`` is branch-reduced against
    ``lambda_C`` and the integral Horn system is checked for ``(lam_a, lam_b, f)``.
    """
    if not (lam_a.nonincreasing and lam_b.nonincreasing):
        raise ValueError("lambda functions must be non-increasing")
    sizes = list(sizes)
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be non-empty and strictly increasing")
    opts = opts or solver.SolveOptions(seed=seed)

    levels = []
    for m in sizes:
        A, B = matrix_model(lam_a, lam_b, m, seed, decommute)
        report = solver.solve(A, B, opts)
        C = principal_log_unitary(unitary_exp(A) @ unitary_exp(B))
        levels.append(
            FactorLevel(
                m=m,
                residual=report.residual,
                success=report.success,
                restarts_used=report.restarts_used,
                lambda_D=step_lambda(report.Z),
                lambda_C=step_lambda(C),
            )
        )

    f = levels[-1].lambda_D
    f_moments = moments(f, K_moments)
    t = grid()
    for i, lv in enumerate(levels):
        lv.moment_gaps = [float(x) for x in np.abs(moments(lv.lambda_C, K_moments) - f_moments)]
        lv.level_moment_gaps = [
            float(x)
            for x in np.abs(moments(lv.lambda_C, K_moments) - moments(lv.lambda_D, K_moments))
        ]
        if i > 0:
            gap = np.abs(lv.lambda_D(t) - levels[i - 1].lambda_D(t))
            lv.cauchy_sup, lv.cauchy_mean = float(gap.max()), float(gap.mean())

    reduced, reduce_error = None, None
    try:
        reduced = branch_reduce(f, levels[-1].lambda_C, angle_tol=angle_tol, tol=TOL.distribution)
    except (DistributionMismatch, ValueError) as exc:
        reduce_error = str(exc)

    cert = integral_horn_check(lam_a, lam_b, f, max_n, horn_tol) if max_n >= 1 else None
    return FactorReport(levels, f, reduced, reduce_error, cert)


def commuting_limit(lam_a, lam_b, m):
    """Rearranged sum of the midpoint samples at size ``m``."""
    a = np.diag(discretize(lam_a, m)).real
    b = np.diag(discretize(lam_b, m)).real
    return decreasing_rearrangement(
        StepFunction(tuple(Fraction(j, m) for j in range(m)), tuple(a + b))
    )
