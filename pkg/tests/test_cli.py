import csv
import io
import json

import numpy as np
import pytest

from thompson_lab import cli, hmat
from thompson_lab.acceptance import FACTOR_LAMBDA_A, FACTOR_LAMBDA_B, determinism_runs
from thompson_lab.compact_sim import compact_pair
from thompson_lab.rearrangement import StepFunction


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def commuting(tmp_path):
    x = np.diag([1.0, -0.5, 0.25])
    y = np.diag([0.3, 0.2, -1.0])
    paths = {}
    for name, m in (("x", x), ("y", y), ("u", np.eye(3)), ("v", np.eye(3)), ("zero", np.zeros((3, 3)))):
        paths[name] = str(tmp_path / f"{name}.hmat")
        hmat.write(paths[name], m)
    return paths


# ------------------------------------------------------------ horn


def test_horn_gen_n2(capsys):
    code, out, _ = run(["horn", "gen", "--n", "2"], capsys)
    assert code == 0
    triples = json.loads(out)
    assert len(triples) == 4
    assert set(triples[0]) == {"I", "J", "K", "n", "r"}


def test_horn_gen_out_and_csv(tmp_path, capsys):
    target = tmp_path / "t.json"
    assert run(["horn", "gen", "--n", "3", "--r", "2", "--out", str(target)], capsys)[0] == 0
    assert all(t["r"] == 2 for t in json.loads(target.read_text()))
    code, out, _ = run(["horn", "gen", "--n", "3", "--format", "csv"], capsys)
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["I", "J", "K", "n", "r"] and len(rows) == 14


def test_horn_check_infeasible(tmp_path, capsys):
    a = write_json(tmp_path / "a.json", [1, 0])
    b = write_json(tmp_path / "b.json", [1, 0])
    c = write_json(tmp_path / "c.json", [2.5, -0.5])
    code, out, _ = run(["horn", "check", "--alpha", a, "--beta", b, "--gamma", c, "--tol", "1e-9"], capsys)
    assert code == 2
    rep = json.loads(out)
    assert rep["result"]["feasible"] is False
    assert rep["config"]["tol"] == 1e-9
    slacks = [v["slack"] for v in rep["result"]["violations"]]
    assert slacks == [pytest.approx(-0.5)]


def test_horn_check_feasible_sorts_input(tmp_path, capsys):
    a = write_json(tmp_path / "a.json", [0, 1])
    b = write_json(tmp_path / "b.json", [1, 0])
    c = write_json(tmp_path / "c.json", [1, 1])
    assert run(["horn", "check", "--alpha", a, "--beta", b, "--gamma", c], capsys)[0] == 0


def test_horn_check_bad_file(tmp_path, capsys):
    a = write_json(tmp_path / "a.json", {"nope": 1})
    code, _, err = run(["horn", "check", "--alpha", a, "--beta", a, "--gamma", a], capsys)
    assert code == 1 and "error" in err
    code, _, _ = run(["horn", "check", "--alpha", str(tmp_path / "missing"), "--beta", a, "--gamma", a], capsys)
    assert code == 1


# ------------------------------------------------------------ thompson


def test_verify_identity_on_commuting(commuting, capsys):
    p = commuting
    code, out, _ = run(["thompson", "verify", "--x", p["x"], "--y", p["y"], "--u", p["u"], "--v", p["v"]], capsys)
    assert code == 0
    res = json.loads(out)["result"]
    # zero up to rounding of e^{ia} e^{ib} against e^{i(a+b)}
    assert res["residual_frobenius"] <= 1e-15 and res["ok"]
    code, out, _ = run(["thompson", "verify", "--x", p["x"], "--y", p["zero"], "--u", p["u"], "--v", p["v"]], capsys)
    assert code == 0 and json.loads(out)["result"]["residual_frobenius"] == 0


def test_solve_then_verify(tmp_path, capsys):
    from thompson_lab.linalg_core import random_hermitian

    paths = {}
    for i, name in enumerate(("x", "y")):
        paths[name] = str(tmp_path / f"{name}.hmat")
        hmat.write(paths[name], random_hermitian(3, [5, i], 1.0))
    code, out, _ = run(["thompson", "solve", "--x", paths["x"], "--y", paths["y"], "--seed", "2"], capsys)
    assert code == 0
    res = json.loads(out)["result"]
    assert res["success"] and res["residual_frobenius"] <= 1e-5
    for name in ("U", "V"):
        (tmp_path / f"{name}.hmat").write_text(res[name])
    code, out, _ = run(
        ["thompson", "verify", "--x", paths["x"], "--y", paths["y"], "--u", str(tmp_path / "U.hmat"), "--v", str(tmp_path / "V.hmat")],
        capsys,
    )
    assert code == 0 and json.loads(out)["result"]["ok"]


def test_verify_wrong_unitaries_exit_2(tmp_path, commuting, capsys):
    p = commuting
    # swapping X for a non-commuting partner breaks the identity with U = V = I
    y = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
    hmat.write(tmp_path / "y2.hmat", y)
    code, out, _ = run(["thompson", "verify", "--x", p["x"], "--y", str(tmp_path / "y2.hmat"), "--u", p["u"], "--v", p["v"]], capsys)
    assert code == 2 and not json.loads(out)["result"]["ok"]


def test_non_hermitian_input(tmp_path, commuting, capsys):
    bad = np.array([[1.0, 2.0], [0.0, 1.0]])
    (tmp_path / "bad.hmat").write_text(hmat.dumps(bad))
    code, _, _ = run(["thompson", "solve", "--x", str(tmp_path / "bad.hmat"), "--y", str(tmp_path / "bad.hmat")], capsys)
    assert code == 1


# ------------------------------------------------------------ rearrange


def test_rearrange_ops(tmp_path, capsys):
    f = write_json(tmp_path / "f.json", StepFunction.from_pieces([0.0, 1.0], ["1/2", "1/2"]).to_dict())
    code, out, _ = run(["rearrange", "--f", f], capsys)
    assert code == 0
    got = StepFunction.from_dict(json.loads(out)["result"]["function"])
    assert got == StepFunction.from_pieces([1.0, 0.0], ["1/2", "1/2"])

    code, out, _ = run(["rearrange", "--f", f, "--op", "dist", "--arc", "0.5,1.5"], capsys)
    assert code == 0 and json.loads(out)["result"]["mass_f"] == pytest.approx(0.5)

    code, out, _ = run(["rearrange", "--f", f, "--format", "csv"], capsys)
    assert out.splitlines()[0] == "start,end,value"


def test_rearrange_reduce_and_mismatch(tmp_path, capsys):
    f = write_json(tmp_path / "f.json", StepFunction.constant(3 * np.pi / 2).to_dict())
    g = write_json(tmp_path / "g.json", StepFunction.constant(-np.pi / 2).to_dict())
    code, out, _ = run(["rearrange", "--f", f, "--g", g, "--op", "reduce"], capsys)
    assert code == 0 and json.loads(out)["result"]["rearranged_matches_g"]
    h = write_json(tmp_path / "h.json", StepFunction.constant(0.25).to_dict())
    code, out, _ = run(["rearrange", "--f", f, "--g", h, "--op", "reduce"], capsys)
    assert code == 2 and "mismatch" in json.loads(out)["result"]
    assert run(["rearrange", "--f", f, "--op", "reduce"], capsys)[0] == 64


# ------------------------------------------------------------ compact / factor


def test_compact_sim_csv_mirror(tmp_path, capsys):
    x, y = compact_pair(10, seed=4)
    hmat.write(tmp_path / "x.hmat", x)
    hmat.write(tmp_path / "y.hmat", y)
    mirror = tmp_path / "levels.csv"
    out_json = tmp_path / "levels.json"
    argv = ["compact", "sim", "--x", str(tmp_path / "x.hmat"), "--y", str(tmp_path / "y.hmat"), "--ranks", "2,4,10"]
    code, _, _ = run(argv + ["--out", str(out_json), "--csv", str(mirror)], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(mirror.read_text())))
    assert list(rows[0]) == cli.COMPACT_COLUMNS
    assert [int(r["k"]) for r in rows] == [2, 4, 10]
    levels = json.loads(out_json.read_text())["result"]["levels"]
    assert [float(r["err_trunc"]) for r in rows] == [lv["err_trunc"] for lv in levels]
    assert float(rows[-1]["err_thompson"]) <= 1e-8


def test_compact_sim_generate_and_usage(capsys):
    code, out, _ = run(["compact", "sim", "--generate", "8", "--ranks", "2,8", "--format", "csv"], capsys)
    assert code == 0 and out.splitlines()[0] == ",".join(cli.COMPACT_COLUMNS)
    assert run(["compact", "sim", "--ranks", "2"], capsys)[0] == 64


def test_factor_pipeline(tmp_path, capsys):
    a = write_json(tmp_path / "a.json", FACTOR_LAMBDA_A.to_dict())
    b = write_json(tmp_path / "b.json", FACTOR_LAMBDA_B.to_dict())
    code, out, _ = run(["factor", "pipeline", "--lambda-a", a, "--lambda-b", b, "--sizes", "4,8", "--max-n", "2", "--commuting"], capsys)
    assert code == 0
    rep = json.loads(out)["result"]
    assert len(rep["levels"]) == 2 and rep["integral_horn"]["feasible"]
    code, out, _ = run(["factor", "pipeline", "--lambda-a", a, "--lambda-b", b, "--sizes", "4,8", "--format", "csv"], capsys)
    assert out.splitlines()[0].startswith("m,residual")


# ------------------------------------------------------------ main / env


def test_usage_errors(capsys):
    assert run(["nonsense"], capsys)[0] == 64
    assert run(["horn", "gen"], capsys)[0] == 64
    code, _, err = run(["horn", "gen", "--n", "2", "--threads", "0"], capsys)
    assert code == 64 and "threads" in err


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv(cli.ENV_THREADS, "3")
    assert cli._default_threads() == 3
    monkeypatch.setenv(cli.ENV_THREADS, "junk")
    assert cli._default_threads() >= 1


def test_embedded_config_excludes_execution_flags(tmp_path, capsys):
    a = write_json(tmp_path / "a.json", [1])
    code, out, _ = run(["horn", "check", "--alpha", a, "--beta", a, "--gamma", a, "--threads", "2"], capsys)
    cfg = json.loads(out)["config"]
    assert "threads" not in cfg and "out" not in cfg and cfg["seed"] == 0


@pytest.mark.slow
def test_outputs_independent_of_threads(tmp_path, capsys):
    runs = determinism_runs(str(tmp_path))
    for name in ("thompson_solve", "compact_sim_independent", "rearrange_reduce"):
        outs = []
        for threads in ("1", "3"):
            code, out, _ = run(runs[name] + ["--threads", threads], capsys)
            assert code == 0, name
            outs.append(out)
        assert outs[0] == outs[1], name


def test_selftest_only(capsys):
    code, out, _ = run(["selftest", "--only", "3,5"], capsys)
    assert code == 0
    lines = [l for l in out.splitlines() if l.startswith("[")]
    assert len(lines) == 2 and all(l.startswith("[PASS]") for l in lines)
