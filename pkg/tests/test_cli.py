import re
from math import e

import numpy as np
import pytest

from mcflab.cli import COMMANDS, build_report, main
from mcflab.io import read_csv, read_kv, sha256


def run(tmp_path, *argv, name="run"):
    out = tmp_path / name
    return main([*argv, "--out", str(out)]), out


def test_entropy_prints_cylinder_value(tmp_path, capsys):
    rc, out = run(tmp_path, "entropy", "--model", "cylinder", "--n", "3")
    assert rc == 0
    text = capsys.readouterr().out
    value = float(re.search(r"entropy = ([0-9.eE+-]+)", text).group(1))
    assert value == pytest.approx(1.47152, abs=1e-3)
    assert value == pytest.approx(4 / e, abs=1e-3)
    assert read_kv(out / "manifest.txt")["check.7.cylinder-n3"] == "PASS"


def test_manifest_lists_every_output(tmp_path):
    rc, out = run(tmp_path, "simulate", "--initial", "dumbbell", "--n", "3", "--dz", "0.02")
    assert rc == 0
    items = read_kv(out / "manifest.txt")
    listed = {k[5:]: v for k, v in items.items() if k.startswith("file.")}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.txt"}
    assert set(listed) == on_disk
    for name, digest in listed.items():
        assert sha256(out / name) == digest
    summary = read_kv(out / "summary.txt")
    assert summary["termination"] == "neck-radius-threshold"
    assert abs(float(summary["z_star"])) <= 0.02
    header, rows = read_csv(out / "trajectory.csv")
    assert header == ["t", "z", "r"] and rows


def test_config_echo_round_trip(tmp_path):
    rc, a = run(tmp_path, "neutral-ode", "--tau0", "-1000", "--every", "50", name="a")
    assert rc == 0
    cfg = read_kv(a / "config.txt")
    assert set(cfg) == {"subcommand", *COMMANDS["neutral-ode"][2]}
    assert float(cfg["tau0"]) == -1000.0 and cfg["every"] == "50"
    rc, b = run(tmp_path, "neutral-ode", "--config", str(a / "config.txt"), name="b")
    assert rc == 0
    assert (a / "neutral.csv").read_bytes() == (b / "neutral.csv").read_bytes()
    ma, mb = read_kv(a / "manifest.txt"), read_kv(b / "manifest.txt")
    assert ma["config_hash"] == mb["config_hash"]


def test_flags_override_config(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("tau0 = -1000\nevery = 50\n")
    rc, out = run(tmp_path, "neutral-ode", "--config", str(conf), "--every", "25")
    assert rc == 0
    cfg = read_kv(out / "config.txt")
    assert cfg["every"] == "25" and float(cfg["tau0"]) == -1000.0


def test_neutral_ode_matches_closed_form(tmp_path):
    rc, out = run(tmp_path, "neutral-ode", "--n", "3", "--tau0", "-10000", "--tau1", "-10")
    assert rc == 0
    header, rows = read_csv(out / "neutral.csv")
    data = np.array(rows, dtype=float)
    a0, cf = data[:, header.index("alpha0")], data[:, header.index("closed_form")]
    assert np.max(np.abs(a0 / cf - 1)) <= 1e-6
    assert data[0, 0] == -10000.0 and data[-1, 0] == pytest.approx(-10.0)


@pytest.mark.parametrize("argv", [
    ["nonsense"],
    ["entropy", "--bogus", "1"],
    ["entropy", "--n", "three"],
    ["entropy", "--model", "torus"],
    ["simulate", "--initial", "cube"],
    ["project", "--jobs", "0"],
])
def test_validation_exit_code(tmp_path, argv, capsys):
    assert main([*argv, "--out", str(tmp_path / "x")]) == 2
    assert capsys.readouterr().err.strip()


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "c.txt"
    conf.write_text("model = cylinder\nradius = 2\n")
    assert main(["entropy", "--config", str(conf), "--out", str(tmp_path / "x")]) == 2
    assert "radius" in capsys.readouterr().err
    conf.write_text("subcommand = simulate\n")
    assert main(["entropy", "--config", str(conf), "--out", str(tmp_path / "y")]) == 2


def test_numerical_exit_code(tmp_path, capsys):
    rc, _ = run(tmp_path, "neutral-ode", "--tau0", "-10", "--tau1", "5", "--dtau", "0.01")
    assert rc == 3
    assert "blows up" in capsys.readouterr().err


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MCFLAB_OUT_DIR", str(tmp_path / "root"))
    assert main(["soliton", "--n", "2"]) == 0
    assert (tmp_path / "root" / "soliton" / "bowl.csv").exists()


def test_jobs_do_not_change_outputs(tmp_path):
    models = "plane:3,sphere:2,cylinder:3"
    _, a = run(tmp_path, "entropy", "--model", models, name="a")
    _, b = run(tmp_path, "entropy", "--model", models, "--jobs", "2", name="b")
    assert (a / "entropy.csv").read_bytes() == (b / "entropy.csv").read_bytes()
    _, c = run(tmp_path, "shrinker", "--kind", "ads", "--a", "3,4", "--jobs", "2", name="c")
    assert sorted(p.name for p in c.glob("*.csv")) == ["ads_a3.csv", "ads_a4.csv"]


def test_other_subcommands(tmp_path, capsys):
    assert run(tmp_path, "dichotomy", name="d")[0] == 0
    assert "verdict=plus-dominant" in capsys.readouterr().out
    # the whole dumbbell run spans too few renormalized time units to classify
    assert run(tmp_path, "dichotomy", "--source", "dumbbell", name="d2")[0] == 2
    rc, out = run(tmp_path, "symmetry", "--section", "ellipse", "--axis", "0", name="s")
    assert rc == 0 and abs(float(read_kv(out / "summary.txt")["mu"])) <= 1e-2
    assert run(tmp_path, "shrinker", "--kind", "sphere", name="sh")[0] == 0
    assert run(tmp_path, "rescale", "--dz", "0.02", name="r")[0] == 0
    assert run(tmp_path, "rescale", "--initial", "cylinder", name="r2")[0] == 2
    assert run(tmp_path, "project", "--model", "tent", name="p")[0] == 2


# ------------------------------------------------------------------ report

def test_report_empty(tmp_path, capsys):
    (tmp_path / "runs").mkdir()
    rc, out = run(tmp_path, "report", "--runs", str(tmp_path / "runs"))
    assert rc == 0
    _, rows = read_csv(out / "report.csv")
    assert len(rows) == 11 and all(r[2] == "SKIPPED" for r in rows)


def test_report_rows_and_determinism(tmp_path):
    runs = tmp_path / "runs"
    for copy in ("a", "b"):
        assert main(["entropy", "--model", "suite", "--out", str(runs / copy / "entropy")]) == 0
        assert main(["soliton", "--n", "3", "--out", str(runs / copy / "soliton")]) == 0
    rows = {r[0]: r for r in build_report(runs)}
    assert rows[7][2] == "PASS" and rows[4][2] == "PASS"
    assert rows[1][2] == "SKIPPED"
    assert rows[11][2] == "PASS" and "differing=0" in rows[11][3]
    # a differing output under the same configuration breaks determinism
    manifest = runs / "b" / "soliton" / "manifest.txt"
    text = manifest.read_text()
    csv = runs / "b" / "soliton" / "bowl.csv"
    csv.write_text(csv.read_text() + "0,0\n")
    manifest.write_text(re.sub(r"file\.bowl\.csv = \w+", f"file.bowl.csv = {sha256(csv)}", text))
    assert {r[0]: r for r in build_report(runs)}[11][2] == "FAIL"


def test_report_corrupted_manifest(tmp_path):
    runs = tmp_path / "runs"
    assert main(["soliton", "--n", "3", "--out", str(runs / "sol")]) == 0
    assert main(["entropy", "--out", str(runs / "ent")]) == 0
    (runs / "sol" / "bowl.csv").write_text("r,u\n0,0\n")
    rc, out = run(tmp_path, "report", "--runs", str(runs))
    assert rc == 3
    _, rows = read_csv(out / "report.csv")
    status = {int(r[0]): r[2] for r in rows}
    assert status[4] == "ERROR" and status[7] == "PASS" and status[1] == "SKIPPED"
    # an unparseable manifest still names its criteria
    (runs / "ent" / "manifest.txt").write_text("criteria = 7\nthis line is not key value\n")
    status = {r[0]: r[2] for r in build_report(runs)}
    assert status[7] == "ERROR"
