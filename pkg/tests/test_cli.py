import json
import subprocess
import sys

import pytest

from bundle_pd.cli import main
from bundle_pd.experiments import trace_digest

SMALL = {"n": 10, "m": 5, "N": 12, "lambda1": 0.01, "lambda2": 1.0, "seed": 2}


@pytest.fixture
def config(tmp_path):
    d = {"instance": SMALL, "budget": 15, "moduli": "hessian",
         "methods": [{"method": "BDA", "m_p": 3, "m_d": 3, "rate_safety": 2},
                     {"method": "BMM-D", "rho": 1.0, "m_d": 3}],
         "outputs": {"dir": str(tmp_path / "out")}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(d))
    return path


def test_gen(tmp_path, config):
    assert main(["gen", "--config", str(config), "--out", str(tmp_path / "inst")]) == 0
    meta = json.loads((tmp_path / "inst" / "meta.json").read_text())
    assert meta["seed"] == 2 and (tmp_path / "inst" / "A.csv").exists()
    assert main(["gen", "--out", str(tmp_path / "i2"), "--n", "4", "--m", "2", "--N", "5", "--seed", "9"]) == 0
    assert json.loads((tmp_path / "i2" / "meta.json").read_text())["n"] == 4


def test_run_and_determinism(tmp_path, config, capsys):
    assert main(["run", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(config), "--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert names == ["BDA_m3-3.csv", "BMM-D_m1-3.csv"]
    for n in names:
        assert trace_digest(tmp_path / "a" / n) == trace_digest(tmp_path / "b" / n)
    assert "BDA_m3-3" in capsys.readouterr().out


def test_seed_override(tmp_path, config):
    main(["run", "--config", str(config), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(config), "--out", str(tmp_path / "b"), "--seed", "3"])
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    assert ra["instance"]["seed"] == 2 and rb["instance"]["seed"] == 3
    assert ra["reference"]["F_star"] != rb["reference"]["F_star"]


def test_sweep(tmp_path, config):
    assert main(["sweep", "--config", str(config), "--axis", "c_d_inv", "--values", "1,2",
                 "--out", str(tmp_path / "s"), "--jobs", "2"]) == 0
    report = json.loads((tmp_path / "s" / "report.json").read_text())
    assert report["sweep"]["axis"] == "c_d_inv" and len(report["runs"]) == 4


def test_sweep_without_axis_is_config_error(config):
    assert main(["sweep", "--config", str(config)]) == 2


def test_config_errors(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"instance": SMALL, "methods": [{"method": "nope"}]}))
    assert main(["run", "--config", str(bad)]) == 2


def test_jobs_env_must_be_integer(config, monkeypatch, tmp_path):
    monkeypatch.setenv("BUNDLE_PD_JOBS", "many")
    assert main(["run", "--config", str(config), "--out", str(tmp_path / "o")]) == 2


def test_infrastructure_error(tmp_path, config):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["run", "--config", str(config), "--out", str(blocker / "sub")]) == 3


def test_verify(capsys):
    assert main(["verify", "--suite", "rates", "--seed", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert all(json.loads(line)["status"] == "pass" for line in lines)


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "bundle_pd.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "verify" in out.stdout
