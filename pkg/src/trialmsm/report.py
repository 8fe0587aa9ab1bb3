"""Deterministic run artifacts: CSV tables, curve files, and the run manifest.

CSV cells use the shortest round-trip decimal representation (Python repr)
with RFC-4180 quoting, so identical inputs and seed produce byte-identical
files regardless of worker count. The JSON manifest carries the config
echo, seed, version, and wall time; wall time makes it the one artifact
outside the byte-determinism contract.
"""

from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import average_hr_os, h_os, hr_os, hr_pfs, s_os, s_pfs
from .config import ConfigDocument, render_config
from .design import AHR_HORIZON, SimSummary, WorkflowReport

__all__ = [
    "format_number",
    "write_csv",
    "write_manifest",
    "write_curves",
    "write_scenario_summary",
    "write_trial_dataset",
    "write_sim_summary",
    "write_workflow_report",
]


def format_number(x) -> str:
    """Shortest decimal string that round-trips to the same float."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else format_number(c) for c in row])


def write_manifest(out_dir, doc: ConfigDocument, command: str, wall_time: float, extra=None):
    manifest = {
        "command": command,
        "config": render_config(doc),
        "config_warnings": list(doc.warnings),
        "master_seed": doc.run.master_seed,
        "n_rep": doc.run.n_rep,
        "threads": doc.run.threads,
        "version": __version__,
        "wall_time_seconds": wall_time,
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_curves(out_dir, scenario, horizon, grid_points) -> list[str]:
    """Per-arm survival/hazard curve CSVs plus the hazard-ratio file."""
    times = np.linspace(0.0, horizon, grid_points)
    written = []
    constant = all(a.hazards.is_constant for a in scenario.arms)
    for arm in scenario.arms:
        hz = arm.hazards
        rows = []
        for t in times:
            t = float(t)
            row = [t, s_pfs(hz, t), s_os(hz, t)]
            row.append(h_os(hz, t) if hz.is_constant else None)
            rows.append(row)
        name = f"curves_{arm.label}.csv"
        write_csv(Path(out_dir) / name, ["t", "s_pfs", "s_os", "h_os"], rows)
        written.append(name)
    if len(scenario.arms) == 2 and constant:
        a, b = scenario.arms[0].hazards, scenario.arms[1].hazards
        ratio = hr_pfs(a, b)
        rows = [[float(t), ratio, hr_os(a, b, float(t))] for t in times]
        write_csv(Path(out_dir) / "hazard_ratios.csv", ["t", "hr_pfs", "hr_os"], rows)
        written.append("hazard_ratios.csv")
    return written


def write_scenario_summary(out_dir, scenario) -> None:
    """One row per arm pair: constant PFS HR and the time-averaged OS HR."""
    a, b = scenario.arms[0].hazards, scenario.arms[1].hazards
    write_csv(
        Path(out_dir) / "scenario_summary.csv",
        ["scenario", "hr_pfs", "average_hr_os"],
        [[scenario.label, hr_pfs(a, b), average_hr_os(a, b, AHR_HORIZON)]],
    )


TRIAL_HEADER = ["id", "arm", "pfs_time", "pfs_event", "os_time", "os_event"]


def write_trial_dataset(path, records) -> None:
    rows = [
        [r.patient_id, r.arm, r.pfs_time, int(r.pfs_event), r.os_time, int(r.os_event)]
        for r in records
    ]
    write_csv(path, TRIAL_HEADER, rows)


def _summary_rows(summary: SimSummary, kind: str):
    rows = []
    for name in ("pfs", "os"):
        ep = summary.endpoints[name]
        for i, an in enumerate(ep.analyses):
            rows.append(
                [
                    summary.scenario_label,
                    kind,
                    name,
                    i + 1,
                    an.event_target,
                    an.reject_rate,
                    an.reject_se,
                    ep.cumulative_rates[i],
                    an.events_mean,
                    an.events_sd,
                    an.events_min,
                    an.events_max,
                    an.shortfall_count,
                ]
            )
    return rows


SUMMARY_HEADER = [
    "scenario", "estimate", "endpoint", "analysis", "event_target",
    "reject_rate", "reject_se", "cumulative_rate",
    "events_mean", "events_sd", "events_min", "events_max", "shortfall_count",
]


def write_sim_summary(out_dir, name, summary: SimSummary) -> None:
    write_csv(Path(out_dir) / name, SUMMARY_HEADER, _summary_rows(summary, "rate"))
    write_csv(
        Path(out_dir) / name.replace(".csv", "_global.csv"),
        ["scenario", "global_rate", "global_se", "joint_rate", "joint_se",
         "n_rep", "n_patients", "master_seed"],
        [[summary.scenario_label, summary.global_rate, summary.global_se,
          summary.joint_rate, summary.joint_se, summary.n_rep,
          summary.n_patients, summary.master_seed]],
    )


def write_workflow_report(out_dir, report: WorkflowReport) -> None:
    out = Path(out_dir)
    planning_rows = [
        [report.scenario_label, p.endpoint, p.target_hr, p.schoenfeld_events, i + 1, t, c]
        for p in report.planning
        for i, (t, c) in enumerate(p.planned_analyses)
    ]
    write_csv(
        out / "planning.csv",
        ["scenario", "endpoint", "target_hr", "schoenfeld_events",
         "analysis", "event_target", "critical_value"],
        planning_rows,
    )
    write_sim_summary(out, "alpha.csv", report.alpha_summary)
    write_sim_summary(out, "power_planned.csv", report.power_at_planned)
    write_sim_summary(out, "power_calibrated.csv", report.power_at_calibrated)
    # the headline row mirrors the published comparison tables: planned
    # (Schoenfeld / O'Brien-Fleming) counts next to calibrated counts and
    # the empirical error rates
    os_plan = next(p for p in report.planning if p.endpoint == "os")
    pfs_plan = next(p for p in report.planning if p.endpoint == "pfs")
    alpha = report.alpha_summary
    power = report.power_at_calibrated
    n = alpha.n_rep

    def with_se(p):
        return [p, math.sqrt(p * (1.0 - p) / n)]

    write_csv(
        out / "summary.csv",
        ["scenario", "design", "pfs_events_planned", "os_events_planned",
         "pfs_events_calibrated", "os_events_calibrated",
         "alpha_pfs", "alpha_pfs_se", "alpha_os", "alpha_os_se",
         "alpha_global", "alpha_global_se",
         "power_pfs", "power_pfs_se", "power_os", "power_os_se",
         "power_joint", "power_joint_se"],
        [[
            report.scenario_label,
            report.design_kind,
            pfs_plan.planned_analyses[-1][0],
            os_plan.planned_analyses[-1][0],
            report.calibrated_events["pfs"],
            report.calibrated_events["os"],
            *with_se(alpha.endpoint_rate("pfs")),
            *with_se(alpha.endpoints["os"].cumulative_rates[-1]),
            *with_se(alpha.global_rate),
            *with_se(power.endpoint_rate("pfs")),
            *with_se(power.endpoint_rate("os")),
            *with_se(power.joint_rate),
        ]],
    )
    trace_rows = [
        [endpoint, target, power]
        for endpoint, cal in sorted(report.calibration.items())
        for target, power in cal.trace
    ]
    write_csv(out / "calibration_trace.csv", ["endpoint", "event_target", "power"], trace_rows)
