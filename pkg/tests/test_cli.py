import csv
import json
import math

import pytest

from app import cli
from app.core.config import StabilityConfig
from app.core.exceptions import ConfigError, HistopolationError
from app.services.moment_system import dirichlet_det_A


def _read_csv(path):
    with open(path, "r", encoding="utf-8") as f:
        return list(csv.reader(f))


def _read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def test_parse_helpers():
    assert cli.parse_int_list("5, 9,13") == [5, 9, 13]
    assert cli.parse_float_list("2:0.5:5") == [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
    assert cli.parse_float_list("1,2.5") == [1.0, 2.5]
    with pytest.raises(ConfigError):
        cli.parse_float_list("2:0:5")
    with pytest.raises(ConfigError):
        cli.parse_int_list("a,b")
    with pytest.raises(ConfigError):
        cli.parse_vertices("0,0;1,0;2,0", 2)
    assert cli.parse_vertices("0,0;1,0;0,1", 2).volume == pytest.approx(0.5)


def test_convergence_writes_sorted_csv(tmp_path):
    out = tmp_path / "conv.csv"
    code = cli.main(["convergence", "--f", "1", "--n", "3,5,7", "--output", str(out)])
    assert code == 0
    rows = _read_csv(out)
    assert rows[0] == ["n", "h", "scheme", "weight", "error", "order"]
    body = rows[1:]
    assert len(body) == 6
    assert [(int(r[0]), r[2]) for r in body] == sorted((int(r[0]), r[2]) for r in body)

    by_scheme = {}
    for r in body:
        by_scheme.setdefault(r[2], []).append(r)
    for scheme_rows in by_scheme.values():
        assert scheme_rows[0][5] == ""
        for prev, cur in zip(scheme_rows, scheme_rows[1:]):
            expected = math.log(float(prev[4]) / float(cur[4])) / math.log(float(prev[1]) / float(cur[1]))
            assert float(cur[5]) == pytest.approx(expected, rel=1e-9)


def test_quasi_convergence_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["convergence", "--f", "3", "--n", "3,5", "--mesh", "quasi", "--delta", "0.2", "--seed", "11"]
    assert cli.main(args + ["--output", str(a)]) == 0
    assert cli.main(args + ["--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_beta_curve(tmp_path):
    out = tmp_path / "beta.csv"
    assert cli.main(["beta-curve", "--alphas", "2:0.5:5", "--alpha-reg", "0.1", "--output", str(out)]) == 0
    rows = _read_csv(out)
    assert rows[0] == ["alpha", "beta", "beta_reg"]
    betas = [float(r[1]) for r in rows[1:]]
    regs = [float(r[2]) for r in rows[1:]]
    assert len(betas) == 7
    assert all(b > 0.0 for b in betas)
    assert all(b1 < b0 for b0, b1 in zip(betas, betas[1:]))
    assert all(r >= b for r, b in zip(regs, betas))


def test_optimize_with_zero_budget(tmp_path):
    out = tmp_path / "opt.json"
    assert cli.main(["optimize", "--alpha", "3", "--budget", "0", "--output", str(out)]) == 0
    payload = _read_json(out)
    assert payload["p_star"] == payload["p0"]
    assert payload["trace"] == []
    assert payload["start"] == payload["final"]


def test_unisolvence_report(tmp_path):
    out = tmp_path / "uni.json"
    assert cli.main(["unisolvence", "--weight", "dirichlet:1,1,1,1", "--output", str(out)]) == 0
    payload = _read_json(out)
    assert payload["verdict"] is True
    assert payload["detA"] == pytest.approx(dirichlet_det_A([1, 1, 1, 1]), rel=1e-10)
    assert payload["detA_formula"] == pytest.approx(payload["detA"], rel=1e-10)
    assert payload["beta"] == pytest.approx(1.0, abs=1e-9)
    assert payload["orthogonality_ok"] is True


def test_unisolvence_debug_duplicate_psi(tmp_path):
    out = tmp_path / "dup.json"
    code = cli.main(["unisolvence", "--debug-duplicate-psi", "--output", str(out)])
    assert code == 0
    payload = _read_json(out)
    assert payload["verdict"] is False
    assert payload["diagnosis"] == "G not SPD"


def test_exit_codes(tmp_path):
    out = str(tmp_path / "x.csv")
    assert cli.main(["convergence", "--weight", "gauss:1", "--output", out]) == 2
    assert cli.main(["convergence", "--delta", "0.5", "--mesh", "quasi", "--output", out]) == 2
    assert cli.main(["convergence", "--f", "12", "--output", out]) == 2
    assert cli.main(["beta-curve", "--alphas", "-1,2", "--output", out]) == 2
    assert cli.main(["optimize", "--d", "2", "--alpha", "2", "--budget", "3", "--output", out]) == 2
    assert cli.main(["unisolvence", "--vertices", "0,0,0;1,0,0;2,0,0;0,1,0", "--output", out]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["convergence", "--mesh", "delaunay"])
    assert exc.value.code == 2


def test_numerical_failure_exits_with_three(tmp_path, monkeypatch):
    def failing(*args, **kwargs):
        raise HistopolationError("矩系统不可解")

    monkeypatch.setattr(cli, "convergence_study", failing)
    assert cli.main(["convergence", "--output", str(tmp_path / "x.csv")]) == 3


def test_beta_curve_alpha_reg_defaults_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HISTO_ALPHA_REG", "0.25")
    monkeypatch.setattr(cli, "stability_config", StabilityConfig())
    out = tmp_path / "beta.csv"
    assert cli.main(["beta-curve", "--alphas", "2,3", "--output", str(out)]) == 0
    rows = _read_csv(out)[1:]
    assert len(rows) == 2
    assert all(r[2] != "" and float(r[2]) >= float(r[1]) for r in rows)

    explicit = tmp_path / "beta0.csv"
    assert cli.main(["beta-curve", "--alphas", "2,3", "--alpha-reg", "0", "--output", str(explicit)]) == 0
    assert all(r[2] == "" for r in _read_csv(explicit)[1:])
