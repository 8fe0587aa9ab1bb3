import json
import math
from pathlib import Path

import pytest

from trialmsm.config import parse_config
from trialmsm.report import (
    format_number,
    write_csv,
    write_curves,
    write_manifest,
    write_scenario_summary,
)

CONFIG = """
scenario:
  label: demo
  arms:
    - label: treatment
      hazards:
        h01: {kind: constant, rate: 0.06}
        h02: {kind: constant, rate: 0.30}
        h12: {kind: constant, rate: 0.30}
    - label: control
      hazards:
        h01: {kind: constant, rate: 0.10}
        h02: {kind: constant, rate: 0.40}
        h12: {kind: constant, rate: 0.30}
  censoring: {kind: constant, rate: 0.008780043000903459}
run:
  horizon: 6.0
  grid_points: 13
"""


def test_format_number_round_trips():
    for x in (0.1, 1 / 3, 2.0, 1e-17, 123456.789):
        assert float(format_number(x)) == x
    assert format_number(7) == "7"
    assert format_number(True) == "1"
    assert format_number(None) == ""


def test_write_csv_quoting(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [["x,y", 0.5]])
    assert path.read_text() == 'a,b\n"x,y",0.5\n'


def test_curves_and_summary(tmp_path):
    doc = parse_config(CONFIG)
    names = write_curves(tmp_path, doc.scenario, doc.run.horizon, doc.run.grid_points)
    assert "curves_treatment.csv" in names and "hazard_ratios.csv" in names
    lines = (tmp_path / "curves_control.csv").read_text().splitlines()
    assert lines[0] == "t,s_pfs,s_os,h_os"
    assert len(lines) == 14
    first = lines[1].split(",")
    assert float(first[1]) == 1.0 and float(first[2]) == 1.0
    # s_os >= s_pfs on every grid point
    for line in lines[1:]:
        _, sp, so, _ = line.split(",")
        assert float(so) >= float(sp)

    write_scenario_summary(tmp_path, doc.scenario)
    row = (tmp_path / "scenario_summary.csv").read_text().splitlines()[1].split(",")
    assert float(row[1]) == pytest.approx(0.72)
    assert float(row[2]) == pytest.approx(0.804, abs=0.02)


def test_manifest_contents(tmp_path):
    doc = parse_config(CONFIG)
    write_manifest(tmp_path, doc, "analytic", 1.25, extra={"note": "x"})
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "analytic"
    assert manifest["wall_time_seconds"] == 1.25
    assert manifest["note"] == "x"
    # the config echo itself parses back
    assert parse_config(manifest["config"]).scenario.label == "demo"
