import os
import subprocess
import sys
from pathlib import Path

import pytest

from risbo.cli import main
from risbo.experiments import CSV_HEADER, parse_results

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
scenario = "sum-mse-bo"
seed = 4
realizations = 2
snr_db = [10.0]

[bo]
T = 5
W = 4
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.name)
def test_shipped_configs_validate(path, capsys):
    assert main(["validate", str(path)]) == 0
    assert capsys.readouterr().out.startswith("ok")


def test_validate_rejects(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('scenario = "power-transfer-total"\n')
    assert main(["validate", str(p)]) != 0
    assert "large_scale" in capsys.readouterr().err


def test_run_to_file(small, tmp_path):
    out = tmp_path / "res" / "out.csv"
    assert main(["run", str(small), "--out", str(out), "--seed", "5"]) == 0
    table = parse_results(out)
    assert {r.seed for r in table} == {5}
    assert {r.n for r in table} == {2}


def test_run_to_stdout(small, capsys):
    assert main(["run", str(small), "--realizations", "1"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == ",".join(CSV_HEADER)


def test_scenario_override(small, tmp_path):
    out = tmp_path / "o.csv"
    assert main(["run", str(small), "--scenario", "sum-mse-known-csi", "--out", str(out)]) == 0
    assert {r.scenario for r in parse_results(out)} == {"sum-mse-known-csi"}


def test_missing_config(tmp_path):
    assert main(["run", str(tmp_path / "nope.toml")]) != 0


def test_module_entry_point(small, tmp_path):
    env = dict(os.environ, RISBO_LOG_LEVEL="INFO")
    out = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "risbo", "run", str(small), "--out", str(out)],
                          env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "scenario sum-mse-bo" in proc.stderr
    bad = subprocess.run([sys.executable, "-m", "risbo", "validate", str(tmp_path / "x.toml")],
                         capture_output=True, text=True)
    assert bad.returncode != 0 and "config error" in bad.stderr
