"""Reader/writer for the ``HMAT 1 <n>`` text matrix format.

Line 1 is ``HMAT 1 <n>``; then ``n`` rows of ``n`` space-separated complex
entries written as ``re+imj``.  Entries are printed with ``repr`` so a
write/read cycle is exact.
"""

from __future__ import annotations

import numpy as np

from .linalg_core import hermitian

MAGIC = "HMAT"
VERSION = 1


class HMATError(ValueError):
    pass


def format_entry(z):
    re, im = float(z.real), float(z.imag)
    sign = "-" if np.signbit(im) else "+"
    return f"{re!r}{sign}{abs(im)!r}j"


def dumps(M):
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise HMATError(f"expected a square matrix, got shape {M.shape}")
    lines = [f"{MAGIC} {VERSION} {M.shape[0]}"]
    lines += [" ".join(format_entry(z) for z in row) for row in M]
    return "\n".join(lines) + "\n"


def loads(text, hermitian_input=True, symmetrize=False):
    """Parse HMAT text.

    ``hermitian_input`` rejects matrices that are not Hermitian to within the
    package tolerance, unless ``symmetrize`` is set, in which case the
    Hermitian part is returned.  Unitary factors are read with
    ``hermitian_input=False``.
    """
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise HMATError("empty HMAT input")
    header = lines[0].split()
    if len(header) != 3 or header[0] != MAGIC:
        raise HMATError(f"bad HMAT header: {lines[0]!r}")
    if int(header[1]) != VERSION:
        raise HMATError(f"unsupported HMAT version {header[1]}")
    n = int(header[2])
    if n < 1 or len(lines) != n + 1:
        raise HMATError(f"expected {n} rows, found {len(lines) - 1}")
    rows = []
    for k, ln in enumerate(lines[1:], start=1):
        tokens = ln.split()
        if len(tokens) != n:
            raise HMATError(f"row {k}: expected {n} entries, found {len(tokens)}")
        try:
            rows.append([complex(t) for t in tokens])
        except ValueError as exc:
            raise HMATError(f"row {k}: {exc}") from None
    M = np.array(rows, dtype=complex)
    if hermitian_input:
        return hermitian(M, symmetrize_input=symmetrize)
    return M


def read(path, hermitian_input=True, symmetrize=False):
    with open(path) as fh:
        return loads(fh.read(), hermitian_input=hermitian_input, symmetrize=symmetrize)


def write(path, M):
    with open(path, "w") as fh:
        fh.write(dumps(M))
