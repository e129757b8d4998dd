import subprocess
import sys

import numpy as np
import pytest

from mhdfem.cli import main
from mhdfem.config import default_config
from mhdfem.diagnostics import read_errors_csv
from mhdfem.timeloop import LEDGER_HEADER, read_ledger


def test_mms2d_run_writes_outputs(tmp_path, capsys):
    rc = main(["mms2d", "--m", "4", "--tau", "0.0625", "--t-final", "0.125", "--out", str(tmp_path)])
    assert rc == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"config.ini", "energy.csv", "errors.csv", "mms2d_t0.125.vtk"} <= names
    rows = read_errors_csv(tmp_path / "errors.csv")
    assert len(rows) == 1 and rows[0]["M"] == 4 and rows[0]["err_u_l2"] > 0
    ledger = read_ledger(tmp_path / "energy.csv")
    assert list(ledger[0]) == LEDGER_HEADER and len(ledger) == 2
    assert "err_u_l2" in capsys.readouterr().out


def test_run_from_config_file(tmp_path):
    cfg = default_config("decay", M=4, tau=0.1, T=0.3, out_dir=str(tmp_path / "o"))
    cfg.save(tmp_path / "d.ini")
    assert main(["run", str(tmp_path / "d.ini")]) == 0
    assert len(read_ledger(tmp_path / "o" / "energy.csv")) == 3


def test_convergence_subcommand(capsys):
    assert main(["convergence", "mms2d", "--ms", "2", "4", "--t-final", "0.25", "--tau-rule", "h2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("M,h,tau") and len(lines) == 3


@pytest.mark.parametrize("argv", [
    ["mms2d", "--tau", "0.3", "--t-final", "1.0"],
    ["mms3d", "--order-b", "2"],
    ["run", "/nonexistent/config.ini"],
    ["convergence", "mms2d", "--ms", "2", "4", "--t-final", "0.0625"],
])
def test_configuration_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "error:" in err


@pytest.mark.parametrize("argv", [["bogus"], ["mms2d", "--m", "x"], []])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "mhdfem", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "hartmann" in r.stdout
    r = subprocess.run([sys.executable, "-m", "mhdfem", "decay", "--tau", "0.7"], capture_output=True, text=True)
    assert r.returncode == 2
