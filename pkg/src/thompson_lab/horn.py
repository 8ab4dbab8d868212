"""Horn triples and the eigenvalue-inequality system for ``C = A + B``.

Indices are 1-based throughout, as in the usual statement of the problem.
``U(n, r)`` is the set of triples of ``r``-subsets with
``sum(I) + sum(J) = r(r+1)/2 + sum(K)``; ``T(n, r)`` refines it recursively
and the union of ``T(n, r)`` over ``r`` is the full Horn system.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .config import TOL


class HornSizeError(ValueError):
    """Requested dimension exceeds the generation cap."""


@dataclass(frozen=True, order=True)
class HornTriple:
    I: tuple
    J: tuple
    K: tuple
    n: int = field(compare=False)
    r: int = field(compare=False)

    def to_dict(self):
        return {"I": list(self.I), "J": list(self.J), "K": list(self.K), "n": self.n, "r": self.r}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["I"]), tuple(d["J"]), tuple(d["K"]), int(d["n"]), int(d["r"]))


@dataclass
class HornCertificate:
    feasible: bool
    trace_gap: float
    violations: list
    checked_count: int

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "trace_gap": self.trace_gap,
            "checked_count": self.checked_count,
            "violations": [dict(t.to_dict(), slack=s) for t, s in self.violations],
        }


_max_n = TOL.horn_max_n
_lock = threading.RLock()


def set_max_n(n):
    """Change the generation cap (default 8)."""
    global _max_n
    _max_n = int(n)


def max_n():
    return _max_n


def _check_range(n, r):
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if n > _max_n:
        raise HornSizeError(f"n={n} exceeds the Horn generation cap {_max_n}")
    if not 1 <= r <= n:
        raise ValueError(f"r={r} out of range for n={n}")


@lru_cache(maxsize=None)
def _subsets_by_sum(n, r):
    table = defaultdict(list)
    for S in combinations(range(1, n + 1), r):
        table[sum(S)].append(S)
    return dict(table)


@lru_cache(maxsize=None)
def _gen_U(n, r):
    by_sum = _subsets_by_sum(n, r)
    shift = r * (r + 1) // 2
    out = []
    for I in combinations(range(1, n + 1), r):
        sI = sum(I)
        for J in combinations(range(1, n + 1), r):
            for K in by_sum.get(sI + sum(J) - shift, ()):
                out.append(HornTriple(I, J, K, n, r))
    out.sort()
    return tuple(out)


def gen_U(n, r):
    """All triples in ``U(n, r)``, sorted lexicographically on ``(I, J, K)``."""
    _check_range(n, r)
    return list(_gen_U(n, r))


def _as_arrays(triples):
    if not triples:
        return None
    idx = np.array([(t.I, t.J, t.K) for t in triples], dtype=np.int64)
    return idx[:, 0, :], idx[:, 1, :], idx[:, 2, :]


@lru_cache(maxsize=None)
def _gen_T(n, r):
    candidates = _gen_U(n, r)
    if r == 1 or not candidates:
        return candidates
    I, J, K = _as_arrays(candidates)
    keep = np.ones(len(candidates), dtype=bool)
    for p in range(1, r):
        sub = _as_arrays(_gen_T(r, p))
        if sub is None:
            continue
        F, G, H = sub
        # i_f is the f-th smallest element of I (1-based positions)
        lhs = I[:, F - 1].sum(axis=2) + J[:, G - 1].sum(axis=2)
        rhs = p * (p + 1) // 2 + K[:, H - 1].sum(axis=2)
        keep &= np.all(lhs <= rhs, axis=1)
    return tuple(t for t, k in zip(candidates, keep) if k)


def gen_T(n, r):
    """Triples in ``T(n, r)``; memoized over ``(n, r)``."""
    _check_range(n, r)
    with _lock:
        return list(_gen_T(n, r))


def gen_all(n):
    """Union of ``T(n, r)`` for ``r = 1..n``."""
    _check_range(n, 1)
    out = []
    for r in range(1, n + 1):
        out.extend(gen_T(n, r))
    return out


@lru_cache(maxsize=None)
def _incidence(n):
    """0/1 matrices selecting I, J, K for every triple of the full system."""
    triples = tuple(gen_all(n))
    m = len(triples)
    MI = np.zeros((m, n))
    MJ = np.zeros((m, n))
    MK = np.zeros((m, n))
    for row, t in enumerate(triples):
        MI[row, np.array(t.I) - 1] = 1.0
        MJ[row, np.array(t.J) - 1] = 1.0
        MK[row, np.array(t.K) - 1] = 1.0
    return triples, MI, MJ, MK


def horn_system(n):
    """``(triples, MI, MJ, MK)`` incidence matrices of the full Horn system."""
    _check_range(n, 1)
    with _lock:
        return _incidence(n)


def _as_sorted(x, name):
    x = np.asarray(x, dtype=float).ravel()
    if np.any(np.diff(x) > 0):
        raise ValueError(f"{name} must be sorted non-increasing")
    return x


def slacks(alpha, beta, gamma):
    """Raw slacks ``sum alpha_I + sum beta_J - sum gamma_K`` for the full system."""
    n = len(alpha)
    _, MI, MJ, MK = horn_system(n)
    return MI @ alpha + MJ @ beta - MK @ gamma


def check_horn(alpha, beta, gamma, tol=TOL.horn):
    """Decide the Horn system for a triple of non-increasing spectra.

    Returns a :class:`HornCertificate`; an inequality counts as violated when
    its slack is below ``-tol`` and the trace identity must hold to ``tol``.
    """
    alpha = _as_sorted(alpha, "alpha")
    beta = _as_sorted(beta, "beta")
    gamma = _as_sorted(gamma, "gamma")
    if not len(alpha) == len(beta) == len(gamma):
        raise ValueError(
            f"spectra have mismatched lengths {len(alpha)}, {len(beta)}, {len(gamma)}"
        )
    n = len(alpha)
    triples, _, _, _ = horn_system(n)
    s = slacks(alpha, beta, gamma)
    trace_gap = float(gamma.sum() - alpha.sum() - beta.sum())
    violations = [(triples[k], float(s[k])) for k in np.flatnonzero(s < -tol)]
    feasible = abs(trace_gap) <= tol and not violations
    return HornCertificate(feasible, trace_gap, violations, len(triples))
