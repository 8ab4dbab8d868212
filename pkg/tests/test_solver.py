import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from thompson_lab import solver
from thompson_lab.linalg_core import (
    random_hermitian,
    random_unitary,
    spectrum,
    unitarity_defect,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def commuting_pair(n, seed, bound=1.0):
    rng = np.random.default_rng(seed)
    Q = random_unitary(n, [seed, 7])
    a, b = rng.uniform(-bound, bound, (2, n))
    return (Q * a) @ Q.conj().T, (Q * b) @ Q.conj().T


def random_skew(n, rng):
    """Skew-Hermitian direction of Frobenius norm 1/sqrt(2), so a pair has unit norm."""
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = 0.5 * (G - G.conj().T)
    return A / (math.sqrt(2) * np.linalg.norm(A))


def expm_objective(X, Y, U, V):
    """Second route through scaling-and-squaring exponentials."""
    Z = U @ X @ U.conj().T + V @ Y @ V.conj().T
    D = sla.expm(1j * X) @ sla.expm(1j * Y) - sla.expm(1j * Z)
    return float(np.sum(np.abs(D) ** 2))


# ------------------------------------------------------------ objective


def test_objective_examples():
    X, Y = commuting_pair(3, 1)
    I = np.eye(3)
    assert solver.objective(X, Y, I, I) <= 1e-28
    X = random_hermitian(3, 2)
    assert solver.objective(X, np.zeros((3, 3)), I, random_unitary(3, 4)) <= 1e-28
    X, Y = random_hermitian(2, [3, 0]), random_hermitian(2, [3, 1])
    val = solver.objective(X, Y, np.eye(2), np.eye(2))
    assert val > 0
    assert abs(val - expm_objective(X, Y, np.eye(2), np.eye(2))) <= 1e-10


@given(seeds, st.integers(min_value=1, max_value=4))
def test_objective_nonnegative_and_matches_expm(seed, n):
    X, Y = random_hermitian(n, [seed, 0], 2.0), random_hermitian(n, [seed, 1], 2.0)
    U, V = random_unitary(n, [seed, 2]), random_unitary(n, [seed, 3])
    val = solver.objective(X, Y, U, V)
    assert val >= 0
    assert abs(val - expm_objective(X, Y, U, V)) <= 1e-10


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        solver.objective(np.eye(2), np.eye(3), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        solver.solve(np.eye(2), np.eye(3))


# ------------------------------------------------------------ gradient


def test_gradient_examples():
    X, Y = commuting_pair(3, 5)
    gU, gV = solver.gradient(X, Y, np.eye(3), np.eye(3))
    assert np.linalg.norm(gU) <= 1e-10 and np.linalg.norm(gV) <= 1e-10
    X = random_hermitian(3, 6)
    gU, gV = solver.gradient(X, np.zeros((3, 3)), random_unitary(3, 1), random_unitary(3, 2))
    assert np.all(gV == 0)


def directional_check(X, Y, U, V, rng, t=1e-5, central=False):
    """Analytic slope along a random unit direction vs a finite difference.

    Returns ``(predicted, finite_difference, gradient_norm)``.
    """
    n = X.shape[0]
    gU, gV = solver.gradient(X, Y, U, V)
    assert np.allclose(gU, -gU.conj().T) and np.allclose(gV, -gV.conj().T)
    A, B = random_skew(n, rng), random_skew(n, rng)
    predicted = float(np.vdot(gU, A).real + np.vdot(gV, B).real)
    plus = solver.objective(X, Y, sla.expm(t * A) @ U, sla.expm(t * B) @ V)
    if central:
        minus = solver.objective(X, Y, sla.expm(-t * A) @ U, sla.expm(-t * B) @ V)
        fd = (plus - minus) / (2 * t)
    else:
        fd = (plus - solver.objective(X, Y, U, V)) / t
    return predicted, fd, math.hypot(np.linalg.norm(gU), np.linalg.norm(gV))


def test_gradient_forward_difference_n3():
    rng = np.random.default_rng(0)
    X, Y = random_hermitian(3, 10, 1.5), random_hermitian(3, 11, 1.5)
    U, V = random_unitary(3, 12), random_unitary(3, 13)
    for _ in range(20):
        predicted, fd, gnorm = directional_check(X, Y, U, V, rng)
        assert abs(predicted - fd) <= 1e-4 * gnorm


@settings(max_examples=25)
@given(seeds, st.integers(min_value=2, max_value=4))
def test_gradient_consistency(seed, n):
    # central differences: the forward-difference curvature bias is itself ~1e-4
    rng = np.random.default_rng(seed)
    X, Y = random_hermitian(n, [seed, 0], 2.0), random_hermitian(n, [seed, 1], 2.0)
    U, V = random_unitary(n, [seed, 2]), random_unitary(n, [seed, 3])
    predicted, fd, gnorm = directional_check(X, Y, U, V, rng, central=True)
    assert abs(predicted - fd) <= 1e-6 * gnorm


# ------------------------------------------------------------ branch targets


def test_branch_targets_examples():
    X, Y = commuting_pair(3, 8, 0.9)
    first = solver.branch_targets(X, Y)[0]
    assert np.allclose(first, spectrum(X + Y), atol=1e-12)
    zero = solver.branch_targets(np.zeros((2, 2)), np.zeros((2, 2)))
    assert len(zero) == 1 and np.allclose(zero[0], 0, atol=1e-15)
    scalar = solver.branch_targets(np.array([[3.0]]), np.array([[3.0]]))
    assert any(abs(t[0] - 6.0) <= 1e-12 for t in scalar)


@given(seeds, st.integers(min_value=1, max_value=4))
def test_branch_targets_are_trace_consistent_and_ordered(seed, n):
    X, Y = random_hermitian(n, [seed, 0], 3.0), random_hermitian(n, [seed, 1], 3.0)
    targets = solver._branch_candidates(X, Y, limit=8)
    principal = targets and solver._principal(X, Y)[0]
    dists = []
    for t in targets:
        assert abs(t.spectrum.sum() - np.trace(X + Y).real) <= 1e-8
        assert np.all(np.diff(t.spectrum) <= 0)
        assert all(abs(m) <= 1 for m in t.shift)
        assert np.linalg.norm(sla.expm(1j * t.exponent) - solver.product(X, Y)) <= 1e-9
        dists.append(np.linalg.norm(t.spectrum - principal))
    assert dists == sorted(dists)
    assert len(targets) <= 8


# ------------------------------------------------------------ solve


def assert_report_consistent(X, Y, rep):
    assert np.allclose(rep.Z, solver.exponent(X, Y, rep.U, rep.V), atol=0)
    recomputed = np.linalg.norm(solver.product(X, Y) - sla.expm(1j * rep.Z))
    assert abs(recomputed - rep.residual) <= 1e-12
    assert unitarity_defect(rep.U) <= 1e-10 and unitarity_defect(rep.V) <= 1e-10


def test_solve_commuting_needs_no_iterations():
    X, Y = commuting_pair(3, 21)
    rep = solver.solve(X, Y)
    assert rep.residual <= 1e-10 and rep.iterations == 0 and rep.success
    assert_report_consistent(X, Y, rep)


def test_solve_with_zero_second_operand():
    X = random_hermitian(3, 22, 2.0)
    rep = solver.solve(X, np.zeros((3, 3)))
    assert rep.residual <= 1e-10
    assert np.allclose(rep.U, np.eye(3))


@pytest.mark.parametrize("seed", range(5))
def test_solve_random_n2(seed):
    X, Y = random_hermitian(2, [30, seed, 0]), random_hermitian(2, [30, seed, 1])
    rep = solver.solve(X, Y, solver.SolveOptions(seed=seed, residual_target=1e-16))
    assert rep.residual <= 1e-8 and rep.restarts_used <= 20
    assert_report_consistent(X, Y, rep)
    assert rep.horn_certificate.feasible


@settings(max_examples=15)
@given(seeds, st.integers(min_value=2, max_value=4))
def test_success_implies_horn_feasible(seed, n):
    X, Y = random_hermitian(n, [seed, 0], 2.5), random_hermitian(n, [seed, 1], 2.5)
    rep = solver.solve(X, Y, solver.SolveOptions(seed=seed))
    if rep.success:
        assert rep.horn_certificate.feasible
    assert np.max(np.abs(spectrum(rep.U @ X @ rep.U.conj().T) - spectrum(X))) <= 1e-10
    assert_report_consistent(X, Y, rep)


def test_iterates_stay_unitary_and_isospectral(monkeypatch):
    X, Y = random_hermitian(4, 40, 3.0), random_hermitian(4, 41, 3.0)
    lamX = spectrum(X)
    seen = []
    original = solver._retract

    def watched(U, A, s):
        out = original(U, A, s)
        seen.append(unitarity_defect(out))
        assert np.max(np.abs(spectrum(out @ X @ out.conj().T) - lamX)) <= 1e-10
        return out

    monkeypatch.setattr(solver, "_retract", watched)
    solver.solve(X, Y, solver.SolveOptions(restarts=3, seed=1, use_branch_targets=False))
    assert seen and max(seen) <= 1e-9


def test_unguided_solve():
    X, Y = random_hermitian(3, 50), random_hermitian(3, 51)
    rep = solver.solve(X, Y, solver.SolveOptions(use_branch_targets=False))
    assert rep.success and rep.branch_shift is None


def test_threads_do_not_change_result():
    X, Y = random_hermitian(3, 60, math.pi), random_hermitian(3, 61, math.pi)
    opts = dict(restarts=6, seed=4, max_iters=30, residual_target=1e-30)
    a = solver.solve(X, Y, solver.SolveOptions(threads=1, **opts))
    b = solver.solve(X, Y, solver.SolveOptions(threads=3, **opts))
    assert np.array_equal(a.U, b.U) and np.array_equal(a.V, b.V)
    assert (a.restart_index, a.iterations, a.restarts_used) == (b.restart_index, b.iterations, b.restarts_used)


def test_above_horn_cap():
    X, Y = random_hermitian(10, 70), random_hermitian(10, 71)
    rep = solver.solve(X, Y)
    assert rep.success and rep.horn_certificate is None


@pytest.mark.parametrize(
    "kwargs",
    [dict(restarts=0), dict(max_iters=0), dict(residual_target=0), dict(shrink=1.0), dict(threads=0)],
)
def test_invalid_options(kwargs):
    with pytest.raises(ValueError):
        solver.SolveOptions(**kwargs)


# ------------------------------------------------------------ verify


def test_verify_examples():
    X, Y = commuting_pair(3, 80)
    residual, cert = solver.verify(X, Y, np.eye(3), np.eye(3))
    assert residual <= 1e-14 and cert.feasible

    X, Y = random_hermitian(3, 81, 2.0), random_hermitian(3, 82, 2.0)
    rep = solver.solve(X, Y, solver.SolveOptions(residual_target=1e-18))
    residual, cert = solver.verify(X, Y, rep.U, rep.V)
    assert residual <= 1e-8 and cert.feasible

    U = rep.U.copy()
    U[:, 0] *= -1
    residual, _ = solver.verify(X, Y, U, rep.V)
    assert residual > 1e-8


# ------------------------------------------------------------ dilation


def test_dilate_structure():
    X = random_hermitian(3, 90, 2.0)
    D = solver.dilate(X)
    assert D.shape == (6, 6)
    assert np.allclose(spectrum(D), np.sort(np.concatenate([spectrum(X), np.zeros(3)]))[::-1], atol=1e-14)
    rep = solver.dilate_and_solve(np.zeros((2, 2)), np.zeros((2, 2)))
    assert rep.dilated and rep.n == 4 and rep.residual == 0


def test_dilation_rescues_stalled_instance():
    # pinned instance: the undilated solve stalls at this budget
    X = random_hermitian(2, [11, 30, 0], math.pi)
    Y = random_hermitian(2, [11, 30, 1], math.pi)
    opts = solver.SolveOptions(restarts=1, max_iters=6, residual_target=1e-16, seed=30)
    plain = solver.solve(X, Y, opts)
    assert plain.residual > 1e-8
    lifted = solver.dilate_and_solve(X, Y, opts)
    assert lifted.residual <= 1e-8 and lifted.dilated
