"""Search for unitaries ``U, V`` with ``e^{iX} e^{iY} = e^{i(UXU* + VYV*)}``.

The search space is the product of two unitary groups.  Each restart runs

1. an optional *spectral phase*: Riemannian gradient descent on
   ``||lambda(UXU* + VYV*) - gamma||^2`` for a target spectrum ``gamma``
   taken from :func:`branch_targets`, followed by a joint conjugation that
   rotates the exponent onto the matching logarithm of ``e^{iX} e^{iY}``;
2. a *residual phase*: Riemannian gradient descent on the squared Frobenius
   defect of the identity (:func:`objective`), using the analytic gradient
   from the Frechet derivative of the exponential.

Iterates move by the exponential retraction ``U <- e^{-sA} U``, so they stay
unitary; steps are chosen by Armijo backtracking.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import horn
from .config import TOL
from .linalg_core import (
    DimensionError,
    commutator,
    frechet_exp,
    haar_unitary,
    hermitian,
    hermitian_eig,
    opnorm,
    principal_log_unitary,
    reorthonormalize,
    skew,
    spectrum,
    unitarity_defect,
    unitary_exp,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveOptions:
    restarts: int = 20
    max_iters: int = 2000
    shrink: float = 0.5
    initial_step: float = 0.1
    armijo: float = 1e-4
    residual_target: float = 1e-10  # on the squared Frobenius residual
    seed: int = 0
    use_branch_targets: bool = True
    m_max: int = 1
    target_limit: int = 8
    grad_tol: float = 1e-12
    threads: int = 1

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1 or self.target_limit < 1:
            raise ValueError("restarts, max_iters and target_limit must be positive")
        if not self.residual_target > 0:
            raise ValueError("residual_target must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not self.initial_step > 0 or not 0 < self.armijo < 1:
            raise ValueError("initial_step must be positive and armijo in (0, 1)")
        if self.m_max < 0 or self.threads < 1:
            raise ValueError("m_max must be non-negative and threads positive")


@dataclass
class SolveReport:
    U: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    residual: float
    iterations: int
    restarts_used: int
    success: bool
    branch_shift: list | None = None
    horn_certificate: horn.HornCertificate | None = None
    residual_operator: float = float("nan")
    dilated: bool = False
    restart_index: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def n(self):
        return self.U.shape[0]


@dataclass
class BranchTarget:
    spectrum: np.ndarray  # sorted non-increasing
    shift: tuple  # integer shifts applied to the sorted principal spectrum
    exponent: np.ndarray  # Hermitian logarithm of e^{iX} e^{iY} with this spectrum


def _check_dims(*mats):
    shapes = {np.shape(m) for m in mats}
    if len(shapes) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 2 or shape[0] != shape[1] or shape[0] < 1:
        raise DimensionError(f"expected non-empty square matrices, got {shape}")


def _inner(a, b):
    """Real inner product on pairs of matrices."""
    return float(np.vdot(a[0], b[0]).real + np.vdot(a[1], b[1]).real)


def _expi(Z):
    w, Q = np.linalg.eigh(Z)
    return (Q * np.exp(1j * w)) @ Q.conj().T


def _conj(U, H):
    M = U @ H @ U.conj().T
    return 0.5 * (M + M.conj().T)


def _retract(U, A, s):
    """``e^{-sA} U`` for skew-Hermitian ``A``."""
    w, Q = np.linalg.eigh(1j * A)  # iA is Hermitian, e^{-sA} = e^{i s (iA)}
    return (Q * np.exp(1j * s * w)) @ Q.conj().T @ U


def product(X, Y):
    return unitary_exp(X) @ unitary_exp(Y)


def exponent(X, Y, U, V):
    """``U X U* + V Y V*``."""
    return hermitian(_conj(U, X) + _conj(V, Y))


def objective(X, Y, U, V):
    """``||e^{iX} e^{iY} - e^{i(UXU* + VYV*)}||_F^2``."""
    _check_dims(X, Y, U, V)
    D = product(X, Y) - unitary_exp(exponent(X, Y, U, V))
    return float(np.vdot(D, D).real)


def _residual_gradient(W, Xp, Yp):
    """Objective and Riemannian gradient given conjugated ``Xp = UXU*``, ``Yp``.

    With ``R = W - e^{iZ}`` the derivative along ``U <- e^{tA} U`` is
    ``-2 Re <M, [A, Xp]>`` where ``M`` is the adjoint of the Frechet map
    ``E -> d e^{i(Z + tE)}`` applied to ``R``.  The adjoint of the Frechet
    derivative of ``exp`` at ``iZ`` is the Frechet derivative at ``-iZ``.
    """
    Z = Xp + Yp
    R = W - _expi(Z)
    f = float(np.vdot(R, R).real)
    M = -1j * frechet_exp(-Z, -1j * R)
    gU = -2.0 * skew(commutator(M, Xp))
    gV = -2.0 * skew(commutator(M, Yp))
    return f, (gU, gV), None


def gradient(X, Y, U, V):
    """Riemannian gradient ``(A, B)`` of :func:`objective` (skew-Hermitian pair).

    The first-order change of the objective along ``U <- e^{tA'} U``,
    ``V <- e^{tB'} V`` is ``Re<A, A'> + Re<B, B'>``.
    """
    _check_dims(X, Y, U, V)
    _, grad, _ = _residual_gradient(product(X, Y), _conj(U, X), _conj(V, Y))
    return grad


def _spectral_gradient(Xp, Yp, gamma):
    """Spectral penalty, its Riemannian gradient and a Gauss-Newton direction.

    With ``Z = Q diag(lam) Q*`` and ``r = lam - gamma``, eigenvalue ``j``
    moves along ``U <- e^{tA} U`` at rate ``Re<[P_j, Xp], A>`` where
    ``P_j = q_j q_j*``.  The Gram matrix of these rates is the Laplacian with
    weights ``|Xq_ij|^2 + |Yq_ij|^2`` (``Xq = Q* Xp Q``), so the minimum-norm
    Gauss-Newton step is ``[Q diag(c) Q*, Xp]`` with ``K c = -r``.
    """
    Z = Xp + Yp
    w, Q = np.linalg.eigh(Z)
    w, Q = w[::-1], Q[:, ::-1]
    r = w - gamma
    h = float(r @ r)
    G = 2.0 * (Q * r) @ Q.conj().T
    grad = (commutator(G, Xp), commutator(G, Yp))
    Xq = Q.conj().T @ Xp @ Q
    Yq = Q.conj().T @ Yp @ Q
    weights = np.abs(Xq) ** 2 + np.abs(Yq) ** 2
    np.fill_diagonal(weights, 0.0)
    K = 2.0 * (np.diag(weights.sum(axis=1)) - weights)
    mu = 1e-12 * max(1.0, float(np.trace(K)))
    c = -np.linalg.solve(K + mu * np.eye(len(r)), r - r.mean())
    D = (Q * c) @ Q.conj().T
    # _descend moves along minus the returned direction
    newton = (-commutator(D, Xp), -commutator(D, Yp))
    return h, grad, newton


def _principal(X, Y):
    C = principal_log_unitary(product(X, Y))
    gamma, Q = hermitian_eig(C)
    return gamma, Q


def _branch_candidates(X, Y, limit, m_max=1):
    n = X.shape[0]
    gamma, Q = _principal(X, Y)
    trace = float(np.trace(X).real + np.trace(Y).real)
    excess = (trace - gamma.sum()) / (2 * np.pi)
    total = round(excess)
    if abs(excess - total) * 2 * np.pi > TOL.branch_trace:
        return []
    alpha, beta = spectrum(X), spectrum(Y)
    out = []
    if n > horn.max_n():
        # no Horn filter available; only an unshifted principal exponent
        if total == 0:
            out.append(BranchTarget(gamma.copy(), (0,) * n, (Q * gamma) @ Q.conj().T))
        return out[:limit]
    shifts = np.array(
        [m for m in itertools.product(range(-m_max, m_max + 1), repeat=n) if sum(m) == total],
        dtype=int,
    ).reshape(-1, n)
    shifted = gamma + 2 * np.pi * shifts
    ok = np.abs(shifted.sum(axis=1) - trace) <= TOL.branch_trace
    ordered = -np.sort(-shifted, axis=1)
    _, MI, MJ, MK = horn.horn_system(n)
    fixed = MI @ alpha + MJ @ beta
    ok &= np.all(fixed[:, None] - MK @ ordered.T >= -TOL.horn, axis=0)
    for m, sh, srt in zip(shifts[ok], shifted[ok], ordered[ok]):
        out.append(BranchTarget(srt, tuple(int(v) for v in m), hermitian((Q * sh) @ Q.conj().T)))
    out.sort(key=lambda t: (float(np.linalg.norm(t.spectrum - gamma)), t.shift))
    return out[:limit]


def branch_targets(X, Y, limit=8, m_max=1):
    """Horn-feasible candidate spectra for the exponent ``Z``.

    Shifts of the principal logarithm's spectrum by ``2 pi m`` (``|m_j| <=
    m_max``) whose sum equals ``tr X + tr Y``, filtered by the Horn system
    against ``lambda(X), lambda(Y)`` and ordered by distance from the
    principal spectrum.  An empty list is a legal answer.
    """
    _check_dims(X, Y)
    return [t.spectrum for t in _branch_candidates(X, Y, limit, m_max)]


class _Run:
    """State of one restart."""

    def __init__(self, X, Y, W, U, V, opts):
        self.X, self.Y, self.W = X, Y, W
        self.U, self.V = U, V
        self.opts = opts
        self.iterations = 0
        self.history = []

    def conjugated(self, U=None, V=None):
        return _conj(self.U if U is None else U, self.X), _conj(self.V if V is None else V, self.Y)

    def _line_search(self, value_grad, value, direction, slope, s):
        """Backtrack along ``U <- e^{-s dU} U`` until the Armijo test passes."""
        opts = self.opts
        dU, dV = direction
        for _ in range(60):
            U1 = _retract(self.U, dU, s)
            V1 = _retract(self.V, dV, s)
            trial = value_grad(*self.conjugated(U1, V1))
            if trial[0] <= value - opts.armijo * s * slope:
                return s, U1, V1, trial
            s *= opts.shrink
        return None

    def _descend(self, value_grad, stop_value, budget):
        """Armijo descent; ``value_grad`` returns ``(value, grad, direction)``.

        ``direction`` may be ``None`` (plain gradient steps); a supplied
        direction is tried first with unit step, the gradient is the fallback.
        """
        opts = self.opts
        value, grad, direction = value_grad(*self.conjugated())
        step = opts.initial_step
        used = 0
        while used < budget and value > stop_value:
            g2 = _inner(grad, grad)
            if math.sqrt(g2) <= opts.grad_tol:
                break
            used += 1
            found = None
            if direction is not None:
                slope = _inner(grad, direction)
                if slope > 0:
                    found = self._line_search(value_grad, value, direction, slope, 1.0)
            if found is None:
                found = self._line_search(value_grad, value, grad, g2, step)
                if found is None:
                    break
                step = min(4.0 * found[0], 1e3)
            _, self.U, self.V, (value, grad, direction) = found
            if unitarity_defect(self.U) > 1e-12 or unitarity_defect(self.V) > 1e-12:
                self.U, self.V = reorthonormalize(self.U), reorthonormalize(self.V)
        self.iterations += used
        return value

    def spectral_phase(self, target, budget):
        gamma = target.spectrum
        scale = 1.0 + float(gamma @ gamma)
        h = self._descend(
            lambda Xp, Yp: _spectral_gradient(Xp, Yp, gamma), 1e-28 * scale, budget
        )
        self.history.append(("spectral", h))
        # rotate the exponent onto the target logarithm: Z -> R Z R*
        _, Qz = hermitian_eig(hermitian(sum(self.conjugated())))
        _, Qc = hermitian_eig(target.exponent)
        R = Qc @ Qz.conj().T
        self.U, self.V = R @ self.U, R @ self.V

    def residual_phase(self, budget):
        f = self._descend(
            lambda Xp, Yp: _residual_gradient(self.W, Xp, Yp), 0.0, budget
        )
        self.history.append(("residual", f))
        return f

    def residual_sq(self):
        D = self.W - _expi(sum(self.conjugated()))
        return float(np.vdot(D, D).real)


def _initial_point(n, restart, opts, initial):
    if restart == 0:
        if initial is not None:
            return np.array(initial[0], dtype=complex), np.array(initial[1], dtype=complex)
        return np.eye(n, dtype=complex), np.eye(n, dtype=complex)
    rng = np.random.default_rng([opts.seed, restart])
    return haar_unitary(n, rng), haar_unitary(n, rng)


def _run_restart(X, Y, W, targets, opts, restart, initial):
    n = X.shape[0]
    U, V = _initial_point(n, restart, opts, initial)
    run = _Run(X, Y, W, U, V, opts)
    shift = None
    if run.residual_sq() > opts.residual_target:
        budget = opts.max_iters
        if targets:
            target = targets[restart % len(targets)]
            shift = list(target.shift)
            run.spectral_phase(target, budget // 2)
            budget -= run.iterations
        if run.residual_sq() > opts.residual_target:
            run.residual_phase(max(budget, 1))
    return run, shift


def _report(X, Y, W, run, shift, restarts_used, restart_index, iterations):
    U, V = run.U, run.V
    Z = exponent(X, Y, U, V)
    D = W - unitary_exp(Z)
    residual = float(np.linalg.norm(D))
    cert = None
    if Z.shape[0] <= horn.max_n():
        cert = horn.check_horn(spectrum(X), spectrum(Y), spectrum(Z), 1e-7)
    return SolveReport(
        U=U,
        V=V,
        Z=Z,
        residual=residual,
        iterations=iterations,
        restarts_used=restarts_used,
        success=False,
        branch_shift=shift,
        horn_certificate=cert,
        residual_operator=opnorm(D),
        restart_index=restart_index,
        history=list(run.history),
    )


def solve(X, Y, opts=None, initial=None):
    """Multi-start search for ``U, V``; returns the best :class:`SolveReport`.

    Restart 0 starts at ``initial`` (default ``U = V = I``), later restarts
    at seeded Haar unitaries.  Restarts are scanned in index order and the
    first success is reported; if none succeeds the smallest residual wins.
    The result does not depend on ``opts.threads``.
    """
    opts = opts or SolveOptions()
    X = hermitian(X)
    Y = hermitian(Y)
    _check_dims(X, Y)
    W = product(X, Y)
    targets = []
    if opts.use_branch_targets:
        targets = _branch_candidates(X, Y, opts.target_limit, opts.m_max)

    results = {}
    chosen = None
    wave = max(1, opts.threads)
    pool = ThreadPoolExecutor(max_workers=wave) if wave > 1 else None
    try:
        for start in range(0, opts.restarts, wave):
            idx = list(range(start, min(start + wave, opts.restarts)))
            if pool is None:
                batch = [_run_restart(X, Y, W, targets, opts, r, initial) for r in idx]
            else:
                batch = list(pool.map(lambda r: _run_restart(X, Y, W, targets, opts, r, initial), idx))
            for r, res in zip(idx, batch):
                results[r] = res
            for r in idx:
                if results[r][0].residual_sq() <= opts.residual_target:
                    chosen = r
                    break
            if chosen is not None:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    if chosen is None:
        chosen = min(results, key=lambda r: (results[r][0].residual_sq(), r))
        restarts_used = len(results)
    else:
        restarts_used = chosen + 1
    iterations = sum(results[r][0].iterations for r in range(restarts_used))
    run, shift = results[chosen]
    report = _report(X, Y, W, run, shift, restarts_used, chosen, iterations)
    report.success = report.residual**2 <= opts.residual_target
    return report


def verify(X, Y, U, V, tol=1e-8):
    """Residual of the identity and the Horn certificate of the exponent.

    Returns ``(residual, certificate)``; the certificate is ``None`` when the
    dimension exceeds the Horn generation cap.
    """
    X, Y = hermitian(X), hermitian(Y)
    _check_dims(X, Y, U, V)
    Z = exponent(X, Y, U, V)
    residual = float(np.linalg.norm(product(X, Y) - unitary_exp(Z)))
    cert = None
    if Z.shape[0] <= horn.max_n():
        cert = horn.check_horn(spectrum(X), spectrum(Y), spectrum(Z), max(tol, TOL.horn))
    return residual, cert


def dilate(M):
    """Embed ``M`` as the top-left block of a zero-padded ``2n x 2n`` matrix."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    out[:n, :n] = M
    return out


def dilate_and_solve(X, Y, opts=None):
    """Solve the doubled problem ``(X (+) 0, Y (+) 0)``; flags the report."""
    X, Y = hermitian(X), hermitian(Y)
    _check_dims(X, Y)
    report = solve(dilate(X), dilate(Y), opts)
    report.dilated = True
    return report
