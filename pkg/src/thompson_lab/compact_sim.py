"""Finite-rank truncation pipeline for pairs of (discretized) compact operators.

For each rank ``k`` the operators are cut down to their ``k`` eigenpairs of
largest modulus, compressed to the joint range ``S_k = R(x_k) + R(y_k)``,
the identity is solved there, and the unitaries are extended by the identity
on the orthogonal complement of ``S_k``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import solver
from .config import TOL
from .linalg_core import (
    hermitian,
    hermitian_eig,
    random_unitary,
    reorthonormalize,
    unitary_exp,
)


@dataclass
class TruncationLevel:
    k: int
    x_k: np.ndarray
    y_k: np.ndarray
    basis: np.ndarray  # N x d_k, orthonormal columns spanning S_k
    u_k: np.ndarray | None = None  # d_k x d_k
    v_k: np.ndarray | None = None
    u_ext: np.ndarray | None = None  # ambient N x N
    v_ext: np.ndarray | None = None
    error: float = float("nan")
    error_trunc: float = float("nan")
    residual: float = float("nan")
    success: bool = False
    failure: str | None = None
    report: solver.SolveReport | None = field(default=None, repr=False)

    @property
    def d_k(self):
        return self.basis.shape[1]

    def summary(self):
        return {
            "k": self.k,
            "d_k": self.d_k,
            "err_trunc": self.error_trunc,
            "err_thompson": self.error,
            "residual": self.residual,
            "success": self.success,
            "failure": self.failure,
        }


def truncate(x, k):
    """Keep the ``k`` eigenpairs of largest modulus.

    Equal moduli are broken by putting the positive eigenvalue first, then by
    the eigenvector order of :func:`hermitian_eig`.
    """
    x = hermitian(x)
    N = x.shape[0]
    if not 1 <= k <= N:
        raise ValueError(f"rank k={k} out of range 1..{N}")
    values, Q = hermitian_eig(x)
    order = sorted(range(N), key=lambda j: (-abs(values[j]), values[j] < 0, j))
    keep = order[:k]
    return hermitian((Q[:, keep] * values[keep]) @ Q[:, keep].conj().T)


def joint_subspace(x_k, y_k, drop_tol=TOL.subspace_drop):
    """Orthonormal basis (columns) of ``R(x_k) + R(y_k)``.

    Rank-revealing SVD of ``[x_k, y_k]``; singular values below
    ``drop_tol * max(1, s_max)`` are discarded.
    """
    x_k, y_k = np.asarray(x_k, dtype=complex), np.asarray(y_k, dtype=complex)
    if x_k.shape != y_k.shape:
        raise ValueError("x_k and y_k must share the ambient dimension")
    W, s, _ = np.linalg.svd(np.hstack([x_k, y_k]), full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((x_k.shape[0], 0), dtype=complex)
    rank = int(np.count_nonzero(s > drop_tol * max(1.0, s[0])))
    return W[:, :rank]


def extend(u, basis):
    """``u`` acting on ``S`` (in ``basis`` coordinates) plus identity on ``S^perp``."""
    N = basis.shape[0]
    P = basis @ basis.conj().T
    return basis @ u @ basis.conj().T + (np.eye(N) - P)


def _warm_start(prev, basis):
    if prev is None or prev.u_ext is None:
        return None
    u0 = reorthonormalize(basis.conj().T @ prev.u_ext @ basis)
    v0 = reorthonormalize(basis.conj().T @ prev.v_ext @ basis)
    return u0, v0


def _solve_level(x, y, k, W, opts, prev):
    x_k, y_k = truncate(x, k), truncate(y, k)
    basis = joint_subspace(x_k, y_k)
    level = TruncationLevel(k=k, x_k=x_k, y_k=y_k, basis=basis)
    level.error_trunc = float(np.linalg.norm(unitary_exp(x_k) @ unitary_exp(y_k) - W))
    N = x.shape[0]
    if basis.shape[1] == 0:
        level.u_ext = level.v_ext = np.eye(N, dtype=complex)
        level.u_k = level.v_k = np.zeros((0, 0), dtype=complex)
        level.residual = 0.0
        level.success = True
    else:
        xs = hermitian(basis.conj().T @ x_k @ basis)
        ys = hermitian(basis.conj().T @ y_k @ basis)
        try:
            report = solver.solve(xs, ys, opts, initial=_warm_start(prev, basis))
        except (np.linalg.LinAlgError, ValueError) as exc:
            level.failure = f"{type(exc).__name__}: {exc}"
            return level
        level.report = report
        level.u_k, level.v_k = report.U, report.V
        level.u_ext, level.v_ext = extend(report.U, basis), extend(report.V, basis)
        level.residual = report.residual
        level.success = report.success
        if not report.success:
            level.failure = "solver missed residual target"
    Zx = level.u_ext @ x @ level.u_ext.conj().T + level.v_ext @ y @ level.v_ext.conj().T
    level.error = float(np.linalg.norm(unitary_exp(hermitian(Zx)) - W))
    return level


# Squared Frobenius target for per-level solves; tighter than the generic
# solver default so the ambient error tracks the truncation error.
LEVEL_RESIDUAL_TARGET = 1e-20


def triad_sequence(x, y, ranks, opts=None, independent=False, threads=1):
    """Run the truncate / compress / solve / extend pipeline for each rank.

    Levels are solved in order with warm starts from the previous level; with
    ``independent`` they are cold-started and may run on ``threads`` threads.
    Solver failures are recorded on the level and the sequence continues.
    """
    x, y = hermitian(x), hermitian(y)
    if x.shape != y.shape:
        raise ValueError("x and y must share the ambient dimension")
    ranks = list(ranks)
    if any(b <= a for a, b in zip(ranks, ranks[1:])):
        raise ValueError("ranks must be strictly increasing")
    opts = opts or solver.SolveOptions(residual_target=LEVEL_RESIDUAL_TARGET)
    W = unitary_exp(x) @ unitary_exp(y)
    if independent:
        work = lambda k: _solve_level(x, y, k, W, opts, None)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(work, ranks))
        return [work(k) for k in ranks]
    levels, prev = [], None
    for k in ranks:
        level = _solve_level(x, y, k, W, opts, prev)
        levels.append(level)
        if level.u_ext is not None:
            prev = level
    return levels


def decay_profile(N, kind="geometric", rate=2.0):
    """Eigenvalue magnitudes ``rate^{-j}`` (geometric) or ``j^{-rate}`` (polynomial), j = 1..N."""
    j = np.arange(1, N + 1, dtype=float)
    if kind == "geometric":
        return rate ** (-j)
    if kind == "polynomial":
        return j ** (-rate)
    raise ValueError(f"unknown decay profile {kind!r}")


def compact_pair(N, seed, kind="geometric", rate=2.0, signed=True):
    """Seeded Hermitian pair with prescribed eigenvalue decay in random bases."""
    rng = np.random.default_rng(seed)
    mags = decay_profile(N, kind, rate)
    out = []
    for sub in (0, 1):
        vals = mags * (rng.choice([-1.0, 1.0], size=N) if signed else 1.0)
        Q = random_unitary(N, [seed, sub])
        out.append(hermitian((Q * vals) @ Q.conj().T))
    return out[0], out[1]
