"""Embedded acceptance suite (also run by ``thompson-lab selftest``).

Each ``criterion_*`` function returns a :class:`CriterionResult`; they use
fixed seeds so a failure can be replayed exactly.
"""

from __future__ import annotations

import math
import os
import statistics
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import compact_sim, factor_sim, horn, solver
from .linalg_core import (
    frechet_exp,
    principal_log_unitary,
    random_hermitian,
    spectrum,
    unitary_exp,
)
from .rearrangement import (
    StepFunction,
    branch_reduce,
    circle_distribution,
    decreasing_rearrangement,
    reduce_angle,
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number}. {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number, name):
    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            passed, detail = fn()
            return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


# ---------------------------------------------------------------- Horn oracle


def _bits(mask, n):
    return tuple(i + 1 for i in range(n) if mask >> i & 1)


def oracle_T(n, r):
    """Direct unmemoized recursion over bitmask-encoded subsets (test oracle)."""
    subsets = [_bits(m, n) for m in range(1 << n) if bin(m).count("1") == r]
    base = r * (r + 1) // 2
    U = [(I, J, K) for I in subsets for J in subsets for K in subsets if sum(I) + sum(J) == base + sum(K)]
    if r == 1:
        return set(U)
    out = set()
    for I, J, K in U:
        ok = True
        for p in range(1, r):
            for F, G, H in oracle_T(r, p):
                lhs = sum(I[f - 1] for f in F) + sum(J[g - 1] for g in G)
                if lhs > p * (p + 1) // 2 + sum(K[h - 1] for h in H):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.add((I, J, K))
    return out


# ---------------------------------------------------------------- instances


def criterion1_pair(i):
    n = 2 + i % 3
    return random_hermitian(n, [1, i, 0], 1.0), random_hermitian(n, [1, i, 1], 1.0)


def criterion2_pair(i):
    n = 2 + i % 3
    return random_hermitian(n, [2, i, 0], math.pi), random_hermitian(n, [2, i, 1], math.pi)


# The pinned factor-pipeline instance (criterion 8).
FACTOR_LAMBDA_A = StepFunction.from_pieces([1.0, 0.25, -0.5], ["1/4", "1/2", "1/4"])
FACTOR_LAMBDA_B = StepFunction.from_pieces([0.8, -0.2, -0.9], ["3/8", "3/8", "1/4"])
FACTOR_SIZES = (32, 64, 128)
FACTOR_SEED = 0


def random_step(rng, pieces_max=16, bound=3 * math.pi):
    """Step function with dyadic breakpoints; about a quarter of values are multiples of pi."""
    pieces = int(rng.integers(1, pieces_max + 1))
    cuts = sorted(rng.choice(np.arange(1, 64), size=pieces - 1, replace=False).tolist())
    bps = [Fraction(0)] + [Fraction(int(c), 64) for c in cuts]
    values = []
    for _ in range(pieces):
        if rng.random() < 0.25:
            values.append(int(rng.integers(-3, 4)) * math.pi)
        else:
            values.append(float(rng.uniform(-bound, bound)))
    return StepFunction(tuple(bps), tuple(values))


def compatible_target(f, rng):
    """Non-increasing ``g`` with ``sup|g| <= pi`` and the circle distribution of ``f``.

    Values at ``-1`` on the circle are sent to ``+pi`` or ``-pi`` at random.
    """
    vals = []
    for v in f.values:
        r = reduce_angle(v)
        if abs(abs(r) - math.pi) <= 1e-12:
            r = math.pi if rng.random() < 0.5 else -math.pi
        vals.append(r)
    return decreasing_rearrangement(StepFunction(f.breakpoints, tuple(vals)))


def _refined_midpoints(*fs):
    cuts = sorted({b for f in fs for b in f.breakpoints} | {Fraction(1)})
    return [(a + b) / 2 for a, b in zip(cuts, cuts[1:])]


# ---------------------------------------------------------------- criteria


@_timed(1, "Thompson solve success")
def criterion_1():
    opts_base = dict(restarts=20, residual_target=1e-16)
    times, worst, failed = [], 0.0, []
    for i in range(50):
        X, Y = criterion1_pair(i)
        t0 = time.perf_counter()
        rep = solver.solve(X, Y, solver.SolveOptions(seed=i, **opts_base))
        times.append(time.perf_counter() - t0)
        worst = max(worst, rep.residual)
        if not rep.residual <= 1e-8:
            failed.append(i)
    med = statistics.median(times)
    ok = not failed and med <= 10.0
    return ok, f"50 pairs, failures={failed}, max residual={worst:.2e}, median time={med:.3f}s"


@_timed(2, "Branch regime")
def criterion_2():
    ok_count, failed = 0, []
    for i in range(20):
        X, Y = criterion2_pair(i)
        rep = solver.solve(
            X, Y, solver.SolveOptions(restarts=50, residual_target=1e-12, m_max=1, seed=i)
        )
        if rep.residual <= 1e-6:
            ok_count += 1
        else:
            failed.append(i)
    rate = ok_count / 20
    return rate >= 0.9, f"success {ok_count}/20 ({rate:.0%}), failing seeds={failed}"


@_timed(3, "Horn soundness")
def criterion_3():
    bad = []
    for i in range(200):
        n = 1 + i % 5
        A = random_hermitian(n, [3, i, 0], 1.0 + i % 7)
        B = random_hermitian(n, [3, i, 1], 1.0 + i % 4)
        cert = horn.check_horn(spectrum(A), spectrum(B), spectrum(A + B), 1e-9)
        if not cert.feasible:
            bad.append(i)
    return not bad, f"200 pairs, infeasible={bad}"


@_timed(4, "Horn generator oracle equivalence")
def criterion_4():
    t0 = time.perf_counter()
    mismatches = []
    for n in range(1, 6):
        for r in range(1, n + 1):
            got = {(t.I, t.J, t.K) for t in horn.gen_T(n, r)}
            if got != oracle_T(n, r):
                mismatches.append((n, r))
    elapsed = time.perf_counter() - t0
    return not mismatches and elapsed <= 60, f"mismatches={mismatches}, {elapsed:.1f}s"


@_timed(5, "Kernel roundtrips")
def criterion_5():
    worst_log = 0.0
    for i in range(100):
        n = 1 + i % 5
        H = random_hermitian(n, [5, i], (math.pi - 1e-3) * (0.05 + 0.95 * ((i * 37) % 100) / 99))
        worst_log = max(worst_log, float(np.linalg.norm(principal_log_unitary(unitary_exp(H)) - H)))
    h = 1e-5
    worst_fd = 0.0
    for i in range(100):
        n = 1 + i % 5
        H = random_hermitian(n, [50, i, 0], 2.0)
        E = random_hermitian(n, [50, i, 1], 1.0)
        fd = (unitary_exp(H + h * E) - unitary_exp(H - h * E)) / (2 * h)
        L = frechet_exp(H, E)
        worst_fd = max(worst_fd, float(np.linalg.norm(L - fd) / np.linalg.norm(L)))
    ok = worst_log <= 1e-9 and worst_fd <= 1e-6
    return ok, f"log roundtrip max={worst_log:.2e}, Frechet rel max={worst_fd:.2e}"


@_timed(6, "Rearrangement suite")
def criterion_6():
    rng = np.random.default_rng(6)
    problems = []
    worst_arc = 0.0
    for i in range(100):
        f = random_step(rng)
        g = compatible_target(f, rng)
        try:
            gbar = branch_reduce(f, g)
        except ValueError as exc:
            problems.append((i, f"branch_reduce: {exc}"))
            continue
        for t in _refined_midpoints(f, gbar):
            if abs(np.exp(1j * f.value_at(t)) - np.exp(1j * gbar.value_at(t))) > 1e-12:
                problems.append((i, "phase"))
                break
        if not decreasing_rearrangement(gbar).same_as(g):
            problems.append((i, "rearrangement"))
        for _ in range(10):
            a = float(rng.uniform(-4 * math.pi, 4 * math.pi))
            arc = (a, a + float(rng.uniform(0.01, 2 * math.pi)))
            d = abs(circle_distribution(f, arc) - circle_distribution(gbar, arc))
            worst_arc = max(worst_arc, d)
    ok = not problems and worst_arc <= 1e-12
    return ok, f"100 functions, problems={problems[:5]}, max arc gap={worst_arc:.1e}"


@_timed(7, "Triad convergence")
def criterion_7():
    t0 = time.perf_counter()
    x, y = compact_sim.compact_pair(64, seed=7, kind="geometric", rate=2.0)
    levels = compact_sim.triad_sequence(x, y, (4, 8, 16, 32, 64))
    elapsed = time.perf_counter() - t0
    trunc = [lv.error_trunc for lv in levels]
    monotone = all(b <= a + 1e-12 for a, b in zip(trunc, trunc[1:]))
    final = levels[-1].error
    ok = monotone and final <= 1e-6 and elapsed <= 300
    return ok, (
        f"err_trunc={[f'{e:.1e}' for e in trunc]}, final combined={final:.1e}, {elapsed:.1f}s"
    )


@_timed(8, "Factor pipeline")
def criterion_8():
    la, lb = FACTOR_LAMBDA_A, FACTOR_LAMBDA_B
    commuting = factor_sim.factor_pipeline(
        la, lb, FACTOR_SIZES, K_moments=5, max_n=4, seed=FACTOR_SEED, decommute=False
    )
    comm_gap = max(max(lv.moment_gaps) for lv in commuting.levels)
    rep = factor_sim.factor_pipeline(
        la, lb, FACTOR_SIZES, K_moments=5, max_n=4, seed=FACTOR_SEED, decommute=True
    )
    top = rep.top_moment_gaps
    monotone = all(b <= a for a, b in zip(top, top[1:]))
    ok = (
        comm_gap <= 1e-9
        and monotone
        and top[-1] <= 5e-2
        and rep.horn is not None
        and rep.horn.feasible
        and all(lv.success for lv in rep.levels)
    )
    return ok, (
        f"commuting max gap={comm_gap:.1e}, top gaps={[f'{g:.2e}' for g in top]}, "
        f"integral Horn feasible={rep.horn.feasible}"
    )


def determinism_runs(workdir):
    """CLI invocations used by criterion 9, keyed by name (argv without threads)."""
    from . import hmat

    X = random_hermitian(3, [9, 0], 2.0)
    Y = random_hermitian(3, [9, 1], 2.0)
    xc, yc = compact_sim.compact_pair(12, seed=9)
    paths = {k: os.path.join(workdir, k) for k in ("x.hmat", "y.hmat", "xc.hmat", "yc.hmat", "a.json", "b.json", "f.json", "g.json")}
    hmat.write(paths["x.hmat"], X)
    hmat.write(paths["y.hmat"], Y)
    hmat.write(paths["xc.hmat"], xc)
    hmat.write(paths["yc.hmat"], yc)
    import json

    for key, f in (("a.json", FACTOR_LAMBDA_A), ("b.json", FACTOR_LAMBDA_B)):
        with open(paths[key], "w") as fh:
            json.dump(f.to_dict(), fh)
    rng = np.random.default_rng(9)
    f = random_step(rng)
    with open(paths["f.json"], "w") as fh:
        json.dump(f.to_dict(), fh)
    with open(paths["g.json"], "w") as fh:
        json.dump(compatible_target(f, rng).to_dict(), fh)
    return {
        "horn_gen": ["horn", "gen", "--n", "4"],
        "thompson_solve": ["thompson", "solve", "--x", paths["x.hmat"], "--y", paths["y.hmat"], "--seed", "3"],
        "compact_sim": ["compact", "sim", "--x", paths["xc.hmat"], "--y", paths["yc.hmat"], "--ranks", "2,4,8,12"],
        "compact_sim_independent": ["compact", "sim", "--x", paths["xc.hmat"], "--y", paths["yc.hmat"], "--ranks", "2,4,8,12", "--independent"],
        "factor_pipeline": ["factor", "pipeline", "--lambda-a", paths["a.json"], "--lambda-b", paths["b.json"], "--sizes", "8,16", "--max-n", "3", "--seed", "1"],
        "rearrange_reduce": ["rearrange", "--f", paths["f.json"], "--g", paths["g.json"], "--op", "reduce"],
    }


@_timed(9, "Determinism")
def criterion_9():
    from . import cli

    differing = []
    with tempfile.TemporaryDirectory() as tmp:
        runs = determinism_runs(tmp)
        for name, argv in runs.items():
            outputs = []
            for attempt, threads in enumerate((1, 1, 2, 3)):
                out = os.path.join(tmp, f"{name}.{attempt}.json")
                cli.main(argv + ["--threads", str(threads), "--out", out])
                with open(out, "rb") as fh:
                    outputs.append(fh.read())
            if len(set(outputs)) != 1:
                differing.append(name)
    return not differing, f"{len(runs)} reports x 4 runs (threads 1,1,2,3), differing={differing}"


CRITERIA = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
]


def run_all(selected=None, stream=None):
    results = []
    for k, crit in enumerate(CRITERIA, start=1):
        if selected and k not in selected:
            continue
        res = crit()
        results.append(res)
        if stream is not None:
            print(res.line(), file=stream, flush=True)
    return results
