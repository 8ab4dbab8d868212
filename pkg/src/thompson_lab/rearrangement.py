"""Step functions on ``[0, 1)``, decreasing rearrangements and branch reduction.

A :class:`StepFunction` is right-continuous and piecewise constant.  Its
breakpoints are kept as :class:`fractions.Fraction` so that widths, and
integrals against interval unions with rational endpoints, are exact up to
the final multiplication by the (float) values.

Angles live on the unit circle through ``t -> e^{it}``; arcs are half-open
``(theta1, theta2]`` and reduced angles lie in ``(-pi, pi]``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .config import TOL
from .linalg_core import spectrum

TWO_PI = 2.0 * math.pi


class DistributionMismatch(ValueError):
    """Two functions do not have the same distribution on the circle."""

    def __init__(self, arc, mass_f, mass_g):
        self.arc = arc
        super().__init__(
            f"circle distributions differ on arc ({arc[0]!r}, {arc[1]!r}]: "
            f"{float(mass_f)!r} vs {float(mass_g)!r}"
        )


def as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


def _fraction_json(q):
    if q.denominator & (q.denominator - 1) == 0:
        return float(q)
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class StepFunction:
    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bps = tuple(as_fraction(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if not bps or bps[0] != 0:
            raise ValueError("breakpoints must start at 0")
        if len(bps) != len(vals):
            raise ValueError("need exactly one value per piece")
        if any(b >= c for b, c in zip(bps, bps[1:])) or bps[-1] >= 1:
            raise ValueError("breakpoints must be strictly increasing inside [0, 1)")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("values must be finite")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_pieces(cls, values, widths):
        """Build from piece values and (positive) widths summing to 1."""
        widths = [as_fraction(w) for w in widths]
        if any(w <= 0 for w in widths) or sum(widths) != 1:
            raise ValueError("widths must be positive and sum to 1")
        bps, acc = [], Fraction(0)
        for w in widths:
            bps.append(acc)
            acc += w
        return cls(tuple(bps), tuple(values))

    @classmethod
    def constant(cls, c):
        return cls((Fraction(0),), (c,))

    @property
    def widths(self):
        ends = self.breakpoints[1:] + (Fraction(1),)
        return tuple(e - b for b, e in zip(self.breakpoints, ends))

    @property
    def nonincreasing(self):
        return all(a >= b for a, b in zip(self.values, self.values[1:]))

    def pieces(self):
        """``(start, end, value)`` triples."""
        ends = self.breakpoints[1:] + (Fraction(1),)
        return list(zip(self.breakpoints, ends, self.values))

    def __call__(self, t):
        bps = [float(b) for b in self.breakpoints]
        vals = np.asarray(self.values)
        idx = np.searchsorted(bps, np.asarray(t, dtype=float), side="right") - 1
        return vals[np.clip(idx, 0, len(vals) - 1)]

    def value_at(self, t):
        """Exact evaluation at a rational point ``t`` in ``[0, 1)``."""
        return self.values[bisect.bisect_right(self.breakpoints, as_fraction(t)) - 1]

    def integral(self):
        return math.fsum(float(w) * v for w, v in zip(self.widths, self.values))

    def integrate(self, a, b):
        """Integral over ``[a, b)`` with exact overlap lengths."""
        a, b = as_fraction(a), as_fraction(b)
        total = []
        for s, e, v in self.pieces():
            lo, hi = max(s, a), min(e, b)
            if hi > lo:
                total.append(float(hi - lo) * v)
        return math.fsum(total)

    def sup_abs(self):
        return max(abs(v) for v in self.values)

    def canonical(self):
        """Merge adjacent pieces carrying the same value."""
        bps, vals = [self.breakpoints[0]], [self.values[0]]
        for b, v in zip(self.breakpoints[1:], self.values[1:]):
            if v != vals[-1]:
                bps.append(b)
                vals.append(v)
        return StepFunction(tuple(bps), tuple(vals))

    def same_as(self, other, tol=0.0):
        """Piece-wise equality after merging (values compared to ``tol``)."""
        a, b = self.canonical(), other.canonical()
        if tol > 0:
            a, b = _merge_close(a, tol), _merge_close(b, tol)
        return a.breakpoints == b.breakpoints and all(
            abs(x - y) <= tol for x, y in zip(a.values, b.values)
        )

    def to_dict(self):
        return {
            "breakpoints": [_fraction_json(b) for b in self.breakpoints],
            "values": list(self.values),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["breakpoints"]), tuple(d["values"]))


def _merge_close(f, tol):
    bps, vals = [f.breakpoints[0]], [f.values[0]]
    for b, v in zip(f.breakpoints[1:], f.values[1:]):
        if abs(v - vals[-1]) > tol:
            bps.append(b)
            vals.append(v)
    return StepFunction(tuple(bps), tuple(vals))


def step_lambda(M):
    """Non-increasing eigenvalue step function: ``lambda_j`` on ``[(j-1)/n, j/n)``."""
    values = spectrum(M)
    n = len(values)
    return StepFunction(tuple(Fraction(j, n) for j in range(n)), tuple(values))


def from_values(values):
    """Equal-width step function carrying ``values`` in the given order."""
    n = len(values)
    return StepFunction(tuple(Fraction(j, n) for j in range(n)), tuple(values))


def decreasing_rearrangement(f):
    """The non-increasing step function equimeasurable with ``f``."""
    order = sorted(range(len(f.values)), key=lambda j: -f.values[j])
    widths = f.widths
    return StepFunction.from_pieces(
        [f.values[j] for j in order], [widths[j] for j in order]
    ).canonical()


def width_above(f, s):
    """``|{t : f(t) > s}|`` as an exact fraction."""
    return sum((w for w, v in zip(f.widths, f.values) if v > s), Fraction(0))


def reduce_angle(x):
    """Representative of ``x`` modulo ``2 pi`` in ``(-pi, pi]``."""
    r = math.remainder(x, TWO_PI)
    return math.pi if r <= -math.pi else r


def on_arc(x, arc):
    theta1, theta2 = arc
    length = theta2 - theta1
    d = (x - theta1) % TWO_PI
    if d == 0.0:
        return length >= TWO_PI
    return d <= length


def circle_distribution(f, arc):
    """Total width of pieces with ``e^{i f(t)}`` on the arc ``(theta1, theta2]``.

    Arcs of length ``2 pi`` or more cover the whole circle.
    """
    theta1, theta2 = arc
    if not theta2 > theta1:
        raise ValueError(f"arc ({theta1}, {theta2}] has non-positive length")
    return float(sum((w for w, v in zip(f.widths, f.values) if on_arc(v, arc)), Fraction(0)))


def _is_minus_one(x, tol):
    return abs(abs(reduce_angle(x)) - math.pi) <= tol


def angle_clusters(values, tol=TOL.distribution):
    """Group reduced angles that agree to ``tol`` on the circle.

    Returns a list of cluster representative angles in increasing order and a
    function mapping a value to its cluster index.
    """
    angles = sorted({reduce_angle(v) for v in values})
    clusters = []
    for a in angles:
        if clusters and a - clusters[-1][-1] <= tol:
            clusters[-1].append(a)
        else:
            clusters.append([a])
    # wrap-around: angles just above -pi belong with angles close to pi
    if len(clusters) > 1 and clusters[0][0] + TWO_PI - clusters[-1][-1] <= tol:
        clusters[-1].extend(clusters.pop(0))
    centers = [c[-1] if c[-1] >= c[0] else c[-1] + TWO_PI for c in clusters]
    lookup = {a: k for k, c in enumerate(clusters) for a in c}

    def index(v):
        return lookup[reduce_angle(v)]

    return centers, index


def _masses(f, index, count):
    masses = [Fraction(0)] * count
    for w, v in zip(f.widths, f.values):
        masses[index(v)] += w
    return masses


def check_same_distribution(f, g, angle_tol=TOL.distribution, tol=TOL.distribution):
    """Raise :class:`DistributionMismatch` unless ``e^{if}`` and ``e^{ig}`` agree.

    Masses are compared on the elementary arcs cut out by the values of both
    functions; each such arc holds exactly one cluster of angles.
    """
    centers, index = angle_clusters(f.values + g.values, angle_tol)
    mf = _masses(f, index, len(centers))
    mg = _masses(g, index, len(centers))
    for k, (a, b) in enumerate(zip(mf, mg)):
        if abs(float(a - b)) > tol:
            prev = centers[k - 1] if k > 0 else centers[-1] - TWO_PI
            if len(centers) == 1:
                prev = centers[0] - TWO_PI
            raise DistributionMismatch((prev, centers[k]), a, b)
    return centers


def branch_reduce(f, g, angle_tol=TOL.distribution, tol=TOL.distribution):
    """Rewrite ``f`` modulo ``2 pi`` into a function whose rearrangement is ``g``.

    Requires ``g`` non-increasing with ``sup|g| <= pi`` and the same circle
    distribution as ``f``.  Values of ``f`` off ``pi (mod 2 pi)`` are shifted
    by the multiple of ``2 pi`` landing them in ``(-pi, pi)``; the set where
    ``e^{if} = -1`` is split, from the left, into a part sent to ``+pi`` of
    width ``|{g = pi}|`` and a part sent to ``-pi`` of width ``|{g = -pi}|``.
    Reduced values are snapped to the value ``g`` takes at the same angle.
    """
    if not g.nonincreasing:
        raise ValueError("g must be non-increasing")
    if g.sup_abs() > math.pi + angle_tol:
        raise ValueError("g must satisfy sup|g| <= pi")
    check_same_distribution(f, g, angle_tol, tol)

    plus = sum((w for w, v in zip(g.widths, g.values) if abs(v - math.pi) <= angle_tol), Fraction(0))
    plus_value = next((v for v in g.values if abs(v - math.pi) <= angle_tol), math.pi)
    minus_value = next((v for v in g.values if abs(v + math.pi) <= angle_tol), -math.pi)
    g_regular = [v for v in g.values if abs(abs(v) - math.pi) > angle_tol]

    def snap(x):
        best = min(g_regular, key=lambda v: abs(reduce_angle(v - x)), default=None)
        if best is not None and abs(reduce_angle(best - x)) <= angle_tol:
            return best
        return x

    widths, values = [], []
    remaining_plus = plus
    for w, v in zip(f.widths, f.values):
        if _is_minus_one(v, angle_tol):
            take = min(w, remaining_plus)
            if take > 0:
                widths.append(take)
                values.append(plus_value)
                remaining_plus -= take
            if w - take > 0:
                widths.append(w - take)
                values.append(minus_value)
        else:
            k = round(v / TWO_PI)
            widths.append(w)
            values.append(snap(v - TWO_PI * k))
    return StepFunction.from_pieces(values, widths)
