import csv
import json

import jsonschema
import numpy as np
import pytest

from fracap import cli
from fracap.config import REPORT_SCHEMA
from fracap.mesh import Mesh1D, stiffness_matrix


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def write_cfg(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_assemble_spectral_s1_is_stiffness(tmp_path):
    cfg = write_cfg(tmp_path, {"mesh": {"n": 16}, "space": {"kind": "spectral", "s": 1.0}})
    code, out = run(["assemble", "--config", cfg], tmp_path)
    assert code == 0
    g = np.loadtxt(out / "gram.txt")
    k = stiffness_matrix(Mesh1D(0, 1, 16))
    assert np.abs(g - k).max() <= 1e-10 * np.abs(k).max()
    assert np.loadtxt(out / "mass.txt").shape == (15, 15)


def test_assemble_tilde_dominates_omega(tmp_path):
    tilde = write_cfg(tmp_path, {"mesh": {"n": 16}, "space": {"kind": "integral_tilde", "s": 0.3}})
    _, a = run(["assemble", "--config", tilde], tmp_path, "a")
    omega = write_cfg(tmp_path, {"mesh": {"n": 16}, "space": {"kind": "integral_omega", "s": 0.3}})
    _, b = run(["assemble", "--config", omega], tmp_path, "b")
    assert np.all(np.diag(np.loadtxt(a / "gram.txt")) > np.diag(np.loadtxt(b / "gram.txt")))


@pytest.mark.parametrize("args", [["assemble", "--n", "1"], ["assemble", "--n", "0"]])
def test_empty_mesh_rejected(args, tmp_path):
    assert run(args, tmp_path)[0] == cli.EXIT_CONFIG


def test_config_errors_exit_2(tmp_path):
    assert run(["solve", "--config", str(tmp_path / "nope.json")], tmp_path)[0] == 2
    bad_expr = write_cfg(tmp_path, {"problem": {"w_d_expression": "exp(x)"}})
    assert run(["solve", "--config", bad_expr, "--n", "16"], tmp_path)[0] == 2
    omega = write_cfg(tmp_path, {"space": {"kind": "integral_omega", "s": 0.7}})
    assert run(["assemble", "--config", omega, "--n", "16"], tmp_path)[0] == 2
    assert run(["solve", "--s", "0.5", "--n", "16"], tmp_path)[0] == 2
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])


def test_numeric_error_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(cli, "assemble", boom)
    assert run(["solve", "--n", "16"], tmp_path)[0] == 3


def test_solve_outputs(tmp_path):
    code, out = run(["solve", "--n", "64"], tmp_path)
    assert code == 0
    rows = read_csv(out / "solution.csv")
    assert rows[0] == ["x", "w", "z", "lambda", "mu"]
    assert len(rows) == 64
    report = json.loads((out / "report.json").read_text())
    jsonschema.validate(report, REPORT_SCHEMA)
    run0 = report["runs"][0]
    assert run0["scalars"]["converged"] is True
    assert len(run0["histories"]["objective"]) == run0["scalars"]["iterations"]


def test_unconverged_still_exit_0(tmp_path):
    cfg = write_cfg(tmp_path, {"schedule": {"max_iter": 2}})
    code, out = run(["solve", "--config", cfg, "--n", "32"], tmp_path)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["runs"][0]["scalars"]["converged"] is False


def test_reproduce_1d(tmp_path):
    code, out = run(["reproduce-1d", "--n", "128"], tmp_path)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["criteria"]["jaccard_at_least_0_95"]
    assert report["criteria"]["support_w_inside_support_z"]


def test_reproduce_spaces(tmp_path):
    code, out = run(["reproduce-spaces", "--n", "64"], tmp_path)
    assert code == 0
    for name in ("tilde", "spectral", "spectral_rescaled"):
        assert read_csv(out / f"solution_{name}.csv")[0] == ["x", "w", "z", "lambda", "mu"]
    rows = read_csv(out / "comparison.csv")
    assert rows[0][:3] == ["run", "kind", "alpha"] and len(rows) == 4
    corr = [float(r[6]) for r in rows[1:]]
    assert corr[0] == pytest.approx(1.0) and min(corr) > 0.9


def test_reproduce_p0_table(tmp_path):
    code, out = run(["reproduce-p0", "--n", "64"], tmp_path)
    assert code == 0
    rows = read_csv(out / "support.csv")
    assert [r[0] for r in rows[1:]] == ["p0_fast", "p0_slow", "p01_fast"]
    report = json.loads((out / "report.json").read_text())
    assert set(report["criteria"]) >= {"slow_schedule_vanishes", "p0_sparser_than_p01"}


def test_capacity_command(tmp_path):
    cfg = write_cfg(tmp_path, {"capacity": {"sets": [[], [[0.2, 0.4]], [[0.1, 0.5]]], "refinement": [32, 64]}})
    code, out = run(["capacity", "--config", cfg, "--n", "64"], tmp_path)
    assert code == 0
    caps = read_csv(out / "capacity.csv")
    assert caps[0] == ["set", "intervals", "nodes", "capacity"]
    assert float(caps[1][3]) == 0.0
    assert float(caps[2][3]) <= float(caps[3][3])
    checks = read_csv(out / "checks.csv")
    assert all(r[4] == "true" and r[5] == "true" for r in checks[1:])
    assert len(read_csv(out / "refinement.csv")) == 1 + 2 * 3


def test_gamma_command(tmp_path):
    code, out = run(["gamma-test", "--n", "64"], tmp_path)
    assert code == 0
    rows = read_csv(out / "gamma.csv")
    assert rows[0] == ["k", "scale", "z_diff", "f1_diff", "f2_diff", "f3_diff"]
    z = [float(r[2]) for r in rows[1:]]
    assert all(b < a for a, b in zip(z, z[1:]))


def test_gamma_constant_sequence_zeros(tmp_path):
    cfg = write_cfg(tmp_path, {"gamma": {"exponents": [1, 1, 1], "include_infinite_limit": False}})
    code, out = run(["gamma-test", "--config", cfg, "--n", "32"], tmp_path)
    assert code == 0
    rows = read_csv(out / "gamma.csv")
    assert all(float(v) == 0.0 for r in rows[1:] for v in r[2:])


@pytest.mark.parametrize("command", ["reproduce-1d", "gamma-test", "capacity"])
def test_deterministic_outputs(command, tmp_path):
    _, a = run([command, "--n", "64"], tmp_path, "a")
    _, b = run([command, "--n", "64"], tmp_path, "b")
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()
