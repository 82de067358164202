import json

import pytest
import yaml

from emproc import cli
from emproc.config import bundled
from emproc.errors import DataError


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


SMALL = {
    "name": "small",
    "model": {"kind": "StationaryOUGaussian", "rho": 1.0},
    "weights": {"q": {"name": "time_modulated_phi"}, "c": {"name": "power", "k": 2.0}},
    "weights2": {"q": {"name": "time_modulated_phi", "base": 2.0, "amplitude": 1.0}},
    "grid": {"T": 2.0, "points": [0.5, 1.0]},
    "run": {"n": 100, "R": 600, "seed": 10},
    "checks": [{"name": "beta_mean"}, {"name": "covariance_surface"}],
}


def run(*argv):
    return cli.run(list(argv))


def reports(directory):
    return sorted(p.name for p in directory.iterdir()) if directory.exists() else []


def test_verify_uniform_bundled(tmp_path):
    out = tmp_path / "out"
    assert run("verify", "--config", str(bundled("uniform_simple")), "--out", str(out)) == 0
    doc = json.loads(next(out.glob("*.json")).read_text())
    assert doc["passed"] and doc["config_digest"] in next(out.glob("*.csv")).name
    assert {"emproc", "numpy", "scipy", "python"} <= set(doc["versions"])
    text = next(out.glob("*.csv")).read_text().splitlines()
    var_cells = [line.split(",") for line in text if "beta_variance:var" in line]
    assert var_cells and all(abs(float(c[5]) - 1 / 12) < 1e-8 for c in var_cells)


def test_negative_n_exits_2_without_outputs(tmp_path):
    out = tmp_path / "out"
    bad = write_cfg(tmp_path, {**SMALL, "run": {"n": -3, "R": 10, "seed": 0}})
    assert run("verify", "--config", bad, "--out", str(out)) == 2
    assert reports(out) == []


def test_unknown_key_exits_2(tmp_path, capsys):
    bad = write_cfg(tmp_path, {**SMALL, "modle": {}})
    assert run("describe", "--config", bad) == 2
    assert "modle" in capsys.readouterr().err


def test_unknown_check_exits_2(tmp_path, capsys):
    bad = write_cfg(tmp_path, {**SMALL, "checks": [{"name": "no_such_check"}]})
    assert run("describe", "--config", bad) == 2
    assert "no_such_check" in capsys.readouterr().err


def test_oracle_draws_nothing(tmp_path):
    out = tmp_path / "out"
    assert run("oracle", "--config", write_cfg(tmp_path, SMALL), "--out", str(out), "--format", "json") == 0
    doc = json.loads(next(out.glob("*.json")).read_text())
    assert doc["rng_draws"] == 0
    assert set(doc["min_eigenvalues"]) == {"Gamma1", "Gamma2", "CrossGamma", "GammaTotal", "Gamma3"}
    assert reports(out) == [p.name for p in out.glob("*-oracle-*.json")]


def test_describe_plan_is_stable(capsys):
    assert run("describe", "--config", str(bundled("uniform_simple"))) == 0
    first = capsys.readouterr().out
    assert "checks: 6" in first
    assert run("describe", "--config", str(bundled("uniform_simple"))) == 0
    assert capsys.readouterr().out == first


def test_check_failure_exits_1(tmp_path):
    data = {**SMALL, "checks": [{"name": "oracle_constants", "params": {"c2": 0.5}}]}
    out = tmp_path / "out"
    assert run("verify", "--config", write_cfg(tmp_path, data), "--out", str(out)) == 1
    doc = json.loads(next(out.glob("*.json")).read_text())
    assert doc["passed"] is False and doc["checks"][0]["passed"] is False


def test_data_error_exits_3(tmp_path, monkeypatch):
    def boom(ctx):
        raise DataError("tied values in sample at t=0.5")

    monkeypatch.setitem(cli.DISPATCH, "simulate", boom)
    out = tmp_path / "out"
    assert run("simulate", "--config", write_cfg(tmp_path, SMALL), "--out", str(out)) == 3
    assert reports(out) == []


def test_tightness_refuses_independent_field(tmp_path):
    data = {**SMALL, "model": {"kind": "IndependentField"}, "tightness": {"delta": 0.3},
            "grid": {"T": 2.0, "linspace": {"start": 0.5, "stop": 1.5, "num": 12}}, "checks": []}
    assert run("tightness", "--config", write_cfg(tmp_path, data), "--out", str(tmp_path / "o")) == 2


def test_tightness_scan(tmp_path):
    data = {**SMALL, "tightness": {"delta": 0.3},
            "grid": {"T": 2.0, "linspace": {"start": 0.5, "stop": 1.5, "num": 12}}, "checks": []}
    out = tmp_path / "out"
    assert run("tightness", "--config", write_cfg(tmp_path, data), "--out", str(out), "--format", "json") == 0
    doc = json.loads(next(out.glob("*.json")).read_text())
    assert 0.5 < doc["scan"]["fitted_exponent"] < 1.5


def test_not_applicable_single_config_exits_2(tmp_path):
    assert run("bridge", "--config", write_cfg(tmp_path, SMALL), "--out", str(tmp_path / "o")) == 2


def test_simulate_and_lstat(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, SMALL)
    assert run("simulate", "--config", cfg, "--out", str(out)) == 0
    assert run("lstat", "--config", cfg, "--out", str(out)) == 0
    names = reports(out)
    assert any("-simulate-" in n for n in names) and any("-lstat-" in n for n in names)
    rows = (out / next(n for n in names if n.endswith(".csv") and "-lstat-" in n)).read_text()
    assert "mean_J_n" in rows


def test_rerun_identical_bytes_and_workers_env(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, SMALL)
    assert run("verify", "--config", cfg, "--out", str(tmp_path / "a")) == 0
    monkeypatch.setenv("EMPROC_WORKERS", "3")
    assert run("verify", "--config", cfg, "--out", str(tmp_path / "b")) == 0
    for name in reports(tmp_path / "a"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    monkeypatch.setenv("EMPROC_WORKERS", "many")
    assert run("verify", "--config", cfg, "--out", str(tmp_path / "c")) == 2


def test_format_selection(tmp_path):
    out = tmp_path / "out"
    assert run("oracle", "--config", write_cfg(tmp_path, SMALL), "--out", str(out), "--format", "csv") == 0
    assert all(n.endswith(".csv") for n in reports(out))
    header = next(out.glob("*.csv")).read_text().splitlines()[0]
    assert header == "t,s,statistic,mc,se,oracle,z,n,R,seed"


def test_bad_subcommand():
    with pytest.raises(SystemExit):
        run("plot", "--all")
