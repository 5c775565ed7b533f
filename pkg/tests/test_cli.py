from __future__ import annotations

import subprocess
import sys

from pfxfem.cli import main
from pfxfem.output import read_curves


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert "continuity" in out and "lshaped" in out


def test_validate(capsys):
    assert main(["validate", "continuity"]) == 0
    assert "ok" in capsys.readouterr().out
    assert main(["validate", "no_such_scenario"]) == 2
    assert "error" in capsys.readouterr().err


def test_validate_reports_config_errors(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[geometry]\nnx = 1\n")
    assert main(["validate", str(p)]) == 2
    assert "missing" in capsys.readouterr().err


def test_bad_arguments():
    assert main(["run"]) == 2
    assert main(["run", "continuity", "--mode", "xyz"]) == 2


def test_run_continuity(tmp_path):
    assert main(["-q", "run", "continuity", "--out", str(tmp_path)]) == 0
    curves = read_curves(tmp_path / "curves.csv")
    assert curves["step"].tolist() == [1]
    assert (tmp_path / "fields_0000.vtk").exists()
    assert (tmp_path / "fields_0001.vtk").exists()


def test_seed_only(tmp_path):
    assert main(["-q", "run", "continuity", "--out", str(tmp_path), "--seed-only"]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["fields_0000.vtk"]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pfxfem", "validate", "lshaped_desk"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "lshaped_desk" in r.stdout
