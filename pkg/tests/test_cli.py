"""End-to-end checks of the command-line interface.

Most tests drive ``eqflow.cli.main`` in process for speed; one test runs
the module through a fresh interpreter to confirm the entry point wiring.
"""

import json
import subprocess
import sys

import pytest

from eqflow import field_from_json, hodograph_refine, state_from_json
from eqflow.cli import main

FIELD_QUADRATIC = '{"m": 1, "couplings": [0.0]}'
FIELD_SYMMETRIC = '{"m": 2, "couplings": [0.0, -1.0, 0.0]}'


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_classify_one_cut_forever(capsys):
    code, out = run_cli(capsys, "classify", "--alpha", "1+0.3i")
    assert code == 0
    doc = json.loads(out)
    assert doc["scenario"] == "OneCutForever"
    assert doc["birth_time"] is None
    assert doc["fusion_time"] is None
    assert doc["slope_sq"] > doc["boundary_slope_sq"]
    assert doc["boundary_slope_sq"] == pytest.approx(0.0776851576, abs=1e-8)


def test_classify_writes_report_file(tmp_path, capsys):
    out_dir = tmp_path / "cls"
    code, out = run_cli(capsys, "classify", "--alpha", "1+0.2i",
                        "--out", str(out_dir))
    assert code == 0
    on_disk = (out_dir / "report.json").read_text()
    assert on_disk == out
    doc = json.loads(on_disk)
    assert doc["scenario"] == "FullSequence"


def test_evolve_full_sequence_artifacts(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, out = run_cli(capsys, "evolve", "--alpha", "1+0.2i",
                        "--t-start", "1e-3", "--t-end", "0.09",
                        "--out", str(out_dir), "--no-figures")
    assert code == 0
    doc = json.loads(out)
    kinds = [e["kind"] for e in doc["events"]]
    assert kinds == ["ExtremaBirth", "BirthOfCut", "Fusion"]
    for name in ("trajectory.csv", "events.json", "field.json",
                 "final_state.json"):
        path = out_dir / name
        assert path.exists() and path.stat().st_size > 0
    events_on_disk = json.loads((out_dir / "events.json").read_text())
    assert [e["kind"] for e in events_on_disk] == kinds
    first, header = (out_dir / "trajectory.csv").read_text().splitlines()[:2]
    assert first.startswith("#")
    assert header.startswith("t,")


def test_evolve_quadratic_no_events(tmp_path, capsys):
    code, out = run_cli(capsys, "evolve", "--field", FIELD_QUADRATIC,
                        "--t-start", "1e-3", "--t-end", "2.0",
                        "--out", str(tmp_path / "q"), "--no-figures")
    assert code == 0
    doc = json.loads(out)
    assert doc["events"] == []
    assert doc["n_states"] > 10


def test_final_state_round_trips_through_refine(tmp_path, capsys):
    out_dir = tmp_path / "rt"
    run_cli(capsys, "evolve", "--field", FIELD_QUADRATIC,
            "--t-start", "1e-3", "--t-end", "1.5",
            "--out", str(out_dir), "--no-figures")
    field = field_from_json((out_dir / "field.json").read_text())
    st = state_from_json(field, (out_dir / "final_state.json").read_text())
    refined = hodograph_refine(field, st.t, st, max_iter=2)
    assert refined.t == pytest.approx(st.t)


def test_reruns_are_byte_identical(tmp_path, capsys):
    argv = ("evolve", "--alpha", "1+0.2i", "--t-start", "1e-3",
            "--t-end", "0.09", "--no-figures")
    run_cli(capsys, *argv, "--out", str(tmp_path / "a"))
    run_cli(capsys, *argv, "--out", str(tmp_path / "b"))
    for name in ("trajectory.csv", "events.json", "field.json",
                 "final_state.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_evolve_renders_figures(tmp_path, capsys):
    out_dir = tmp_path / "figs"
    code, _ = run_cli(capsys, "evolve", "--field", FIELD_QUADRATIC,
                      "--t-start", "0.5", "--t-end", "1.5",
                      "--out", str(out_dir))
    assert code == 0
    for name in ("support.png", "densities.png", "scalars.png"):
        assert (out_dir / name).stat().st_size > 0


def test_probe_fusion_jump(capsys):
    code, out = run_cli(capsys, "probe", "--field", FIELD_SYMMETRIC,
                        "--t-start", "0.5", "--t-end", "3.0",
                        "--mode", "jump")
    assert code == 0
    doc = json.loads(out)
    assert [e["kind"] for e in doc["events"]] == ["Fusion"]
    assert doc["jump"]["left"] == pytest.approx(-0.125, abs=1e-3)
    assert doc["jump"]["right"] == pytest.approx(-0.0625, abs=1e-3)


def test_probe_scaling_mode(capsys):
    code, out = run_cli(capsys, "probe", "--field", FIELD_SYMMETRIC,
                        "--t-start", "0.5", "--t-end", "3.0",
                        "--mode", "scaling")
    assert code == 0
    doc = json.loads(out)
    assert doc["scaling"]["kind"] == "Fusion"
    assert doc["scaling"]["exponent"] == pytest.approx(0.5, abs=0.02)
    assert "jump" not in doc


def test_probe_without_events_fails_cleanly(capsys):
    code, out = run_cli(capsys, "probe", "--field", FIELD_QUADRATIC,
                        "--t-start", "0.5", "--t-end", "1.5")
    assert code == 2
    doc = json.loads(out)
    assert doc["error"] == "InsufficientWindow"
    assert "message" in doc


def test_probe_event_index_out_of_range(capsys):
    code, out = run_cli(capsys, "probe", "--field", FIELD_SYMMETRIC,
                        "--t-start", "0.5", "--t-end", "3.0",
                        "--event-index", "4")
    assert code == 2
    doc = json.loads(out)
    assert "out of range" in doc["message"]


def test_fekete_subcommand(tmp_path, capsys):
    out_dir = tmp_path / "fk"
    code, out = run_cli(capsys, "fekete", "--field", FIELD_QUADRATIC,
                        "--t-start", "1e-3", "--t-end", "1.0",
                        "--n", "64", "--out", str(out_dir))
    assert code == 0
    doc = json.loads(out)
    assert doc["n"] == 64
    assert doc["distance"] < 0.06
    assert len(doc["points"]) == 64
    csv_lines = (out_dir / "points.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "index,point"
    assert len(csv_lines) == 65


def test_sweep_grid_is_deterministic(tmp_path, capsys):
    argv = ("sweep", "--re-min", "0.6", "--re-max", "1.4",
            "--im-min", "0.1", "--im-max", "0.4", "--grid", "3")
    code, first = run_cli(capsys, *argv)
    assert code == 0
    _, second = run_cli(capsys, *argv)
    assert first == second
    doc = json.loads(first)
    assert len(doc["rows"]) == 9
    known = {"OneCutForever", "TypeIIIBoundary", "FullSequence",
             "RealCriticalSequence", "SymmetricTwoCut", "Error"}
    assert {r["scenario"] for r in doc["rows"]} <= known
    code, csv_out = run_cli(capsys, *argv, "--out", str(tmp_path / "sw"))
    assert code == 0
    lines = (tmp_path / "sw" / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "alpha_re,alpha_im,scenario,slope_sq"
    assert len(lines) == 10


def test_bad_alpha_reports_json_error(capsys):
    code, out = run_cli(capsys, "classify", "--alpha", "bogus")
    assert code == 2
    doc = json.loads(out)
    assert doc["error"] == "EqflowError"
    assert "bogus" in doc["message"]


def test_missing_field_reports_json_error(capsys):
    code, out = run_cli(capsys, "classify")
    assert code == 2
    assert "no field given" in json.loads(out)["message"]


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "eqflow.cli", "classify",
         "--alpha", "1+0.3i"],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["scenario"] == "OneCutForever"
