"""Dense Hermitian / unitary kernels.

Matrices are plain complex ``numpy`` arrays.  :func:`hermitian` and
:func:`unitary` are the validating constructors; every other routine assumes
its inputs already went through one of them (or came out of this module).
Spectra are 1-D float arrays sorted non-increasing.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .config import TOL


class EigenError(np.linalg.LinAlgError):
    """Eigensolver failed to converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DimensionError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


def symmetrize(M):
    """Return ``((M + M*)/2, ||M - (M + M*)/2||_F)``."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    H = 0.5 * (M + M.conj().T)
    return H, float(np.linalg.norm(M - H))


def hermitian(M, symmetrize_input=True, tol=TOL.hermiticity):
    """Validate and return ``M`` as a Hermitian complex array.

    With ``symmetrize_input`` the Hermitian part is returned whatever the
    defect; otherwise a defect above ``tol`` (relative to ``max(1, ||M||)``)
    raises :class:`NotHermitianError`.
    """
    H, correction = symmetrize(M)
    if not symmetrize_input and correction > tol * max(1.0, np.linalg.norm(H)):
        raise NotHermitianError(f"matrix is not Hermitian (defect {correction:.3e})")
    return H


def unitarity_defect(U):
    U = np.asarray(U)
    return float(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0])))


def reorthonormalize(U):
    """Closest unitary matrix (polar factor)."""
    W, _, Vh = np.linalg.svd(U)
    return W @ Vh


def unitary(U, tol=TOL.unitarity):
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {U.shape}")
    if unitarity_defect(U) > tol:
        U = reorthonormalize(U)
    return U


def _check_same_shape(*mats):
    shapes = {np.shape(m) for m in mats}
    if len(shapes) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(shapes)}")


def _fix_phases(Q):
    """Make the first non-negligible component of each column real positive."""
    Q = Q.copy()
    for j in range(Q.shape[1]):
        col = Q[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size:
            z = col[idx[0]]
            Q[:, j] = col * (abs(z) / z)
    return Q


def _lex_key(v):
    return tuple(np.round(np.column_stack([v.real, v.imag]).ravel(), 12))


def hermitian_eig(H):
    """Eigendecomposition ``H = Q diag(values) Q*`` with values non-increasing.

    Output is deterministic: each eigenvector has its first nonzero component
    real positive, and eigenvectors of a repeated eigenvalue are ordered
    lexicographically (descending) on their components.
    """
    H = np.asarray(H, dtype=complex)
    values = vectors = None
    for driver in ("evd", "ev", "evr"):
        try:
            values, vectors = scipy.linalg.eigh(H, driver=driver, check_finite=True)
            break
        except (np.linalg.LinAlgError, ValueError):
            continue
    if values is None:
        raise EigenError("Hermitian eigensolver did not converge")

    order = np.argsort(-values, kind="stable")
    values = values[order]
    Q = _fix_phases(vectors[:, order])

    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    n = len(values)
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and values[start] - values[stop] <= 1e-12 * scale:
            stop += 1
        if stop - start > 1:
            block = sorted(range(start, stop), key=lambda j: _lex_key(Q[:, j]), reverse=True)
            Q[:, start:stop] = Q[:, block]
        start = stop

    residual = np.linalg.norm(H - (Q * values) @ Q.conj().T)
    if residual > TOL.reconstruction * max(1.0, np.linalg.norm(H)):
        raise EigenError("eigendecomposition failed reconstruction check", residual)
    return values, Q


def spectrum(H):
    """Eigenvalues of a Hermitian matrix, non-increasing."""
    return np.sort(np.linalg.eigvalsh(np.asarray(H, dtype=complex)))[::-1]


def unitary_exp(H):
    """``e^{iH}`` for Hermitian ``H`` via its eigendecomposition."""
    values, Q = hermitian_eig(H)
    return (Q * np.exp(1j * values)) @ Q.conj().T


def principal_log_unitary(W, full_output=False):
    """Hermitian ``Z`` with ``e^{iZ} = W`` and spectrum in ``(-pi, pi]``.

    Eigenvalues of ``W`` within ``TOL.branch_sensitive`` of ``-1`` are mapped
    to ``+pi``.  With ``full_output`` also returns the number of such
    branch-sensitive eigenvalues.
    """
    W = np.asarray(W, dtype=complex)
    T, Q = scipy.linalg.schur(W, output="complex")
    eigs = np.diag(T)
    phases = np.angle(eigs)
    sensitive = np.abs(eigs + 1.0) <= TOL.branch_sensitive
    phases[sensitive] = np.pi
    Z = hermitian((Q * phases) @ Q.conj().T)
    if full_output:
        return Z, int(np.count_nonzero(sensitive))
    return Z


def expm_frechet_block(A, E):
    """Frechet derivative of the general exponential at ``A`` in direction ``E``.

    Read off the upper-right block of ``expm([[A, E], [0, A]])``.
    """
    A = np.asarray(A, dtype=complex)
    E = np.asarray(E, dtype=complex)
    _check_same_shape(A, E)
    n = A.shape[0]
    block = np.zeros((2 * n, 2 * n), dtype=complex)
    block[:n, :n] = A
    block[n:, n:] = A
    block[:n, n:] = E
    return scipy.linalg.expm(block)[:n, n:]


def frechet_exp(H, E):
    """``d/dt e^{i(H + tE)}`` at ``t = 0``.

    ``E`` is usually Hermitian but any complex direction is accepted, which
    the solver uses to apply the adjoint map.
    """
    H = np.asarray(H, dtype=complex)
    E = np.asarray(E, dtype=complex)
    _check_same_shape(H, E)
    return expm_frechet_block(1j * H, 1j * E)


def conjugate(U, H):
    """``U H U*``, re-symmetrized."""
    _check_same_shape(U, H)
    M = U @ H @ U.conj().T
    return 0.5 * (M + M.conj().T)


def _rng(seed):
    return np.random.default_rng(seed)


def random_hermitian(n, seed, norm_bound=1.0):
    """Seeded random Hermitian matrix scaled to operator norm ``norm_bound``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = _rng(seed)
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = 0.5 * (G + G.conj().T)
    norm = np.linalg.norm(H, 2)
    if norm > 0:
        H *= norm_bound / norm
    return hermitian(H)


def haar_unitary(n, rng):
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_unitary(n, seed):
    """Seeded Haar-distributed unitary (QR of a complex Gaussian, phase fixed)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return haar_unitary(n, _rng(seed))


def opnorm(M):
    return float(np.linalg.norm(M, 2)) if np.size(M) else 0.0


def skew(M):
    return 0.5 * (M - M.conj().T)


def commutator(A, B):
    return A @ B - B @ A
