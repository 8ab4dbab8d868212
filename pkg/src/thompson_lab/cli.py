"""Command-line interface: ``thompson-lab <group> <command> [options]``.

Exit codes: 0 success, 2 mathematically infeasible or unsuccessful outcome,
1 input/output failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import compact_sim, factor_sim, hmat, horn, solver
from .config import TOL
from .rearrangement import (
    DistributionMismatch,
    StepFunction,
    branch_reduce,
    check_same_distribution,
    circle_distribution,
    decreasing_rearrangement,
)

EXIT_OK, EXIT_IO, EXIT_FAIL, EXIT_USAGE = 0, 1, 2, 64
ENV_THREADS = "THOMPSON_LAB_THREADS"
# Flags that change how a run executes but never what it computes.
_NOT_EMBEDDED = {"threads", "out", "verbose", "quiet", "handler", "csv"}

log = logging.getLogger("thompson_lab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------- helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _dump_json(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _emit(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_EMBEDDED}
    return cfg


def _report(args, result):
    return _dump_json({"config": _config(args), "result": result})


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _read_hermitian(path, args):
    return hmat.read(path, hermitian_input=True, symmetrize=args.symmetrize)


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _read_spectrum(path):
    data = _read_json(path)
    if isinstance(data, dict):
        data = data.get("values", data.get("spectrum"))
    if not isinstance(data, list) or not all(isinstance(v, (int, float)) for v in data):
        raise ValueError(f"{path}: expected a JSON array of numbers")
    return np.sort(np.asarray(data, dtype=float))[::-1]


def _read_step(path):
    data = _read_json(path)
    try:
        return StepFunction.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: not a STEP v1 object ({exc})") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_pair(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'theta1,theta2', got {text!r}")
    return a, b


def _solve_options(args):
    return solver.SolveOptions(
        restarts=args.restarts,
        max_iters=args.max_iters,
        residual_target=args.residual_target,
        seed=args.seed,
        use_branch_targets=not args.no_branch_targets,
        m_max=args.m_max,
        threads=args.threads,
    )


# ---------------------------------------------------------------- commands


def cmd_horn_gen(args):
    triples = horn.gen_T(args.n, args.r) if args.r else horn.gen_all(args.n)
    log.info("generated %d triples", len(triples))
    if args.format == "csv":
        rows = [(" ".join(map(str, t.I)), " ".join(map(str, t.J)), " ".join(map(str, t.K)), t.n, t.r) for t in triples]
        _emit(args, _csv_text(["I", "J", "K", "n", "r"], rows))
    else:
        _emit(args, _dump_json([t.to_dict() for t in triples]))
    return EXIT_OK


def cmd_horn_check(args):
    alpha, beta, gamma = (_read_spectrum(p) for p in (args.alpha, args.beta, args.gamma))
    cert = horn.check_horn(alpha, beta, gamma, args.tol)
    if args.format == "csv":
        rows = [(" ".join(map(str, t.I)), " ".join(map(str, t.J)), " ".join(map(str, t.K)), t.r, s) for t, s in cert.violations]
        _emit(args, _csv_text(["I", "J", "K", "r", "slack"], rows))
    else:
        _emit(args, _report(args, cert.to_dict()))
    return EXIT_OK if cert.feasible else EXIT_FAIL


def cmd_thompson_solve(args):
    X, Y = _read_hermitian(args.x, args), _read_hermitian(args.y, args)
    opts = _solve_options(args)
    rep = solver.dilate_and_solve(X, Y, opts) if args.dilate else solver.solve(X, Y, opts)
    cert = rep.horn_certificate
    result = {
        "n": rep.n,
        "residual_frobenius": rep.residual,
        "residual_operator": rep.residual_operator,
        "iterations": rep.iterations,
        "restarts_used": rep.restarts_used,
        "restart_index": rep.restart_index,
        "branch_shift": None if rep.branch_shift is None else list(rep.branch_shift),
        "horn_feasible": None if cert is None else cert.feasible,
        "success": rep.success,
        "dilated": rep.dilated,
        "U": hmat.dumps(rep.U),
        "V": hmat.dumps(rep.V),
        "Z": hmat.dumps(rep.Z),
    }
    log.info("residual %.3e after %d restarts", rep.residual, rep.restarts_used)
    _emit(args, _report(args, result))
    return EXIT_OK if rep.success else EXIT_FAIL


def cmd_thompson_verify(args):
    X, Y = _read_hermitian(args.x, args), _read_hermitian(args.y, args)
    U = hmat.read(args.u, hermitian_input=False)
    V = hmat.read(args.v, hermitian_input=False)
    residual, cert = solver.verify(X, Y, U, V, args.tol)
    ok = residual <= args.tol and (cert is None or cert.feasible)
    result = {
        "residual_frobenius": residual,
        "horn_certificate": None if cert is None else cert.to_dict(),
        "ok": ok,
    }
    _emit(args, _report(args, result))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_rearrange(args):
    f = _read_step(args.f)
    g = _read_step(args.g) if args.g else None
    status = EXIT_OK
    result = {"op": args.op}
    out_fn = None
    if args.op == "rearrange":
        out_fn = decreasing_rearrangement(f)
    elif args.op == "reduce":
        if g is None:
            raise UsageError("--op reduce needs --g")
        try:
            out_fn = branch_reduce(f, g)
            result["rearranged_matches_g"] = decreasing_rearrangement(out_fn).same_as(g)
        except DistributionMismatch as exc:
            result["mismatch"] = {"arc": list(exc.arc), "message": str(exc)}
            status = EXIT_FAIL
    else:
        if args.arc:
            result["arc"] = list(args.arc)
            result["mass_f"] = circle_distribution(f, args.arc)
            if g is not None:
                result["mass_g"] = circle_distribution(g, args.arc)
        if g is not None:
            try:
                check_same_distribution(f, g)
                result["same_distribution"] = True
            except DistributionMismatch as exc:
                result["same_distribution"] = False
                result["mismatch"] = {"arc": list(exc.arc), "message": str(exc)}
                status = EXIT_FAIL
        if not args.arc and g is None:
            raise UsageError("--op dist needs --arc and/or --g")
    if out_fn is not None:
        result["function"] = out_fn.to_dict()
    if args.format == "csv" and out_fn is not None:
        rows = [(str(a), str(b), v) for a, b, v in out_fn.pieces()]
        _emit(args, _csv_text(["start", "end", "value"], rows))
    else:
        _emit(args, _report(args, result))
    return status


COMPACT_COLUMNS = ["k", "d_k", "err_trunc", "err_thompson", "residual"]


def cmd_compact_sim(args):
    if args.x and args.y:
        x, y = _read_hermitian(args.x, args), _read_hermitian(args.y, args)
    elif args.generate:
        x, y = compact_sim.compact_pair(args.generate, args.seed, args.decay, args.rate)
    else:
        raise UsageError("compact sim needs --x and --y, or --generate N")
    levels = compact_sim.triad_sequence(
        x, y, args.ranks, _solve_options(args), independent=args.independent, threads=args.threads
    )
    rows = [lv.summary() for lv in levels]
    csv_text = _csv_text(COMPACT_COLUMNS, [[r[c] for c in COMPACT_COLUMNS] for r in rows])
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv_text)
    if args.format == "csv":
        _emit(args, csv_text)
    else:
        _emit(args, _report(args, {"N": x.shape[0], "levels": rows}))
    return EXIT_OK if all(lv.success for lv in levels) else EXIT_FAIL


def cmd_factor_pipeline(args):
    la, lb = _read_step(args.lambda_a), _read_step(args.lambda_b)
    opts = _solve_options(args)
    rep = factor_sim.factor_pipeline(
        la,
        lb,
        args.sizes,
        K_moments=args.moments,
        max_n=args.max_n,
        seed=args.seed,
        decommute=not args.commuting,
        opts=opts,
    )
    if args.format == "csv":
        rows = [
            [lv.m, lv.residual, max(lv.moment_gaps), lv.cauchy_sup, lv.cauchy_mean]
            for lv in rep.levels
        ]
        _emit(args, _csv_text(["m", "residual", "top_moment_gap", "cauchy_sup", "cauchy_mean"], rows))
    else:
        _emit(args, _report(args, rep.to_dict()))
    ok = all(lv.success for lv in rep.levels) and (rep.horn is None or rep.horn.feasible)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_selftest(args):
    from . import acceptance

    results = acceptance.run_all(set(args.only) if args.only else None, stream=sys.stdout)
    if args.out:
        _emit(args, _dump_json([{"number": r.number, "name": r.name, "passed": r.passed, "detail": r.detail} for r in results]))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# ---------------------------------------------------------------- parser


def _default_threads():
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", ENV_THREADS, env)
    return os.cpu_count() or 1


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=None, help=f"thread budget (fallback ${ENV_THREADS})")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--symmetrize", action="store_true", help="accept slightly non-Hermitian HMAT input")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def _solver_flags(p, residual_target=1e-10):
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--residual-target", type=float, default=residual_target, help="on the squared Frobenius residual")
    p.add_argument("--m-max", type=int, default=1, help="largest branch shift per eigenvalue")
    p.add_argument("--no-branch-targets", action="store_true")


def build_parser():
    common = _common()
    parser = _Parser(prog="thompson-lab", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    g_horn = groups.add_parser("horn", help="Horn triples and inequality checks")
    horn_cmds = g_horn.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = horn_cmds.add_parser("gen", parents=[common], help="generate Horn triples")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=int, default=None, help="only T(n, r)")
    p.set_defaults(handler=cmd_horn_gen)
    p = horn_cmds.add_parser("check", parents=[common], help="check a spectrum triple")
    for name in ("alpha", "beta", "gamma"):
        p.add_argument(f"--{name}", required=True, help="JSON array of eigenvalues")
    p.add_argument("--tol", type=float, default=TOL.horn)
    p.set_defaults(handler=cmd_horn_check)

    g_th = groups.add_parser("thompson", help="solve or verify the exponential identity")
    th_cmds = g_th.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = th_cmds.add_parser("solve", parents=[common])
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--dilate", action="store_true", help="solve the zero-padded doubled problem")
    _solver_flags(p)
    p.set_defaults(handler=cmd_thompson_solve)
    p = th_cmds.add_parser("verify", parents=[common])
    for name in ("x", "y", "u", "v"):
        p.add_argument(f"--{name}", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(handler=cmd_thompson_verify)

    p = groups.add_parser("rearrange", parents=[common], help="step-function operations")
    p.add_argument("--f", required=True, help="STEP v1 JSON")
    p.add_argument("--g", help="STEP v1 JSON (reduce / dist)")
    p.add_argument("--op", choices=("rearrange", "reduce", "dist"), default="rearrange")
    p.add_argument("--arc", type=_float_pair, help="theta1,theta2 for --op dist")
    p.set_defaults(handler=cmd_rearrange)

    g_c = groups.add_parser("compact", help="finite-rank truncation pipeline")
    c_cmds = g_c.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = c_cmds.add_parser("sim", parents=[common])
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--generate", type=int, metavar="N", help="use a seeded N x N compact pair instead of files")
    p.add_argument("--decay", choices=("geometric", "polynomial"), default="geometric")
    p.add_argument("--rate", type=float, default=2.0)
    p.add_argument("--ranks", type=_int_list, required=True)
    p.add_argument("--independent", action="store_true", help="cold-start every level")
    p.add_argument("--csv", help="also write the CSV mirror here")
    _solver_flags(p, compact_sim.LEVEL_RESIDUAL_TARGET)
    p.set_defaults(handler=cmd_compact_sim)

    g_f = groups.add_parser("factor", help="spectral-distribution simulation")
    f_cmds = g_f.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = f_cmds.add_parser("pipeline", parents=[common])
    p.add_argument("--lambda-a", required=True)
    p.add_argument("--lambda-b", required=True)
    p.add_argument("--sizes", type=_int_list, default=[32, 64, 128])
    p.add_argument("--moments", type=int, default=5)
    p.add_argument("--max-n", type=int, default=4)
    p.add_argument("--commuting", action="store_true", help="skip the de-commuting conjugation")
    _solver_flags(p)
    p.set_defaults(handler=cmd_factor_pipeline)

    p = groups.add_parser("selftest", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", type=_int_list, help="criterion numbers, e.g. 1,3")
    p.set_defaults(handler=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.threads is None:
        args.threads = _default_threads()
    if args.threads < 1:
        print("thompson-lab: error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    level = logging.ERROR if args.quiet else (logging.INFO if args.verbose == 1 else logging.DEBUG if args.verbose > 1 else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(level)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"thompson-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, json.JSONDecodeError, np.linalg.LinAlgError) as exc:
        print(f"thompson-lab: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
