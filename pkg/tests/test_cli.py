import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from llmaxwell.cli import COMMANDS, main

SMALL = """\
[geometry]
cells = 24
[steady]
lambdas = geometric(50, 2, 6)
[dynamics]
seeds = 2
gamma_seeds = 1
gammas = 0, 0.2
[spectrum]
tbound_samples = 3
[maxwell]
ball_cells = 24
demag_samples = 3
[output]
output_dir = {out}
snapshot_every = {every}
"""


def config(tmp_path, name="run", every=0, extra=""):
    out = tmp_path / name
    path = tmp_path / f"{name}.ini"
    path.write_text(SMALL.format(out=out, every=every) + extra)
    return path, out


def artifacts(out: Path):
    return {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()}


def check_manifest(out: Path, command: str, status: int = 0):
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == command and m["exit_status"] == status
    assert set(m["files"]) == artifacts(out)
    assert {"numpy", "scipy", "python", "llmaxwell"} <= set(m["versions"])
    assert m["timings_seconds"]["total"] >= 0
    return m


@pytest.mark.parametrize("command", ["demag-check", "limit", "steady"])
def test_single_commands(tmp_path, command, capsys):
    path, out = config(tmp_path)
    assert main([command, "--config", str(path)]) == 0
    check_manifest(out, command)
    assert (out / "config.ini").exists()


def test_demag_check_prints_three_numbers(tmp_path, capsys):
    path, _ = config(tmp_path)
    main(["demag-check", "-c", str(path)])
    text = capsys.readouterr().out
    assert "demag factor" in text and "energy identity" in text and "L2-bound margin" in text


def test_sweep_rows_and_slope(tmp_path, capsys):
    path, out = config(tmp_path, every=2)
    assert main(["sweep", "-c", str(path)]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert len(rows) == 6
    summary = (out / "sweep_summary.txt").read_text()
    assert "sup_xi_slope" in summary
    assert "fitted slope" in capsys.readouterr().out
    m = check_manifest(out, "sweep")
    assert "plots.gp" in m["files"]
    assert sum(f.startswith("snapshots/") for f in m["files"]) == 3


def test_evolve_and_spectrum(tmp_path):
    path, out = config(tmp_path, every=5)
    assert main(["evolve", "-q", "-c", str(path)]) == 0
    rows = list(csv.DictReader((out / "evolve.csv").open()))
    assert len(rows) == 3 and all(r["converged"] == "1" for r in rows)
    assert any(f.startswith("snapshots/evolve_") for f in artifacts(out))
    check_manifest(out, "evolve")
    # rerun into the same directory: stale files from the first run are removed
    assert main(["spectrum", "-q", "-c", str(path)]) == 0
    m = check_manifest(out, "spectrum")
    assert not any(f.startswith("decay/") for f in m["files"])
    rows = list(csv.DictReader((out / "spectrum.csv").open()))
    assert len(rows) == 12 and all(float(r["re_mu1"]) > 0 for r in rows)


def test_reruns_are_bit_identical(tmp_path, monkeypatch):
    path, _ = config(tmp_path)
    outs = []
    for k in range(2):
        out = tmp_path / f"rerun{k}"
        monkeypatch.setenv("LLMAXWELL_OUTPUT_DIR", str(out))
        assert main(["evolve", "-q", "-c", str(path)]) == 0
        outs.append(out)
    files = sorted(f for f in artifacts(outs[0]) if f.endswith(".csv"))
    assert files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_full_report(tmp_path, capsys):
    path, out = config(tmp_path)
    status = main(["full-report", "-c", str(path)])
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert [int(r["criterion"]) for r in rows] == list(range(1, 10))
    passed = all(r["passed"] == "1" for r in rows)
    assert status == (0 if passed else 4)
    check_manifest(out, "full-report", status)
    assert capsys.readouterr().out.count("[PASS]") == sum(r["passed"] == "1" for r in rows)


def test_bad_config_exit_code(tmp_path, capsys):
    path, out = config(tmp_path, extra="[geometry]\n")
    path.write_text("[geometry]\ncells = 24\nwidth = 3\n")
    assert main(["sweep", "-c", str(path)]) == 2
    err = capsys.readouterr().err
    assert f"{path}:3" in err and "width" in err
    assert not out.exists()


def test_solver_failure_writes_diagnostics(tmp_path):
    path, out = config(tmp_path, extra="")
    path.write_text(path.read_text().replace("[steady]\n", "[steady]\nmax_iters = 1\n"))
    assert main(["steady", "-q", "-c", str(path)]) == 3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["type"] == "NonConvergenceError" and diag["residual"] > 0
    check_manifest(out, "steady", 3)


def test_unknown_command(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    assert "usage:" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "llmaxwell", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for c in COMMANDS:
        assert c in res.stdout
