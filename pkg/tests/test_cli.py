import json
import subprocess
import sys

import pytest

from mimeticfd.cli import main


def write(tmp_path, data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_identities_command(tmp_path, capsys):
    cfg = write(tmp_path, {"grids": [16], "orders": [2], "trials": 1})
    assert main(["identities", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "2"]) == 0
    assert "worst residual" in capsys.readouterr().out
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seed"] == 2 and man["config"]["experiment"] == "identities"


def test_convergence_command(tmp_path, capsys):
    cfg = write(tmp_path, {"grids": [8, 16], "orders": [2], "reltols": [1e-8], "end_time": 0.25})
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "order_observed" in out
    assert (tmp_path / "convergence.csv").exists()


def test_run_command(tmp_path):
    cfg = write(tmp_path, {"grids": [16], "orders": [2], "reltols": [1e-8], "end_time": 0.1})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "diagonal.csv").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["convergence", "--config", write(tmp_path, {"grids": []})]) == 2
    assert "config error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["convergence", "--config", str(bad)]) == 2
    assert main(["convergence", "--config", str(tmp_path / "missing.json")]) == 2
    cfg = write(tmp_path, {"experiment": "identities"})
    assert main(["convergence", "--config", cfg]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    cfg = write(tmp_path, {"grids": [16], "orders": [2], "reltols": [1e-8], "end_time": 0.25,
                           "max_steps": 2})
    assert main(["conservation", "--config", cfg]) == 3
    assert main(["run", "--config", cfg]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"grids": [16], "orders": [2], "trials": 1})
    proc = subprocess.run([sys.executable, "-m", "mimeticfd.cli", "identities", "--config", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "identities:" in proc.stdout


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
