"""Command-line front end.

    trialmsm <command> --config <path> --out <dir> [--seed N] [--reps N] [--threads N]

Commands: analytic (closed-form curves and scenario summary), simulate
(trial datasets), design-coprimary and design-gs (the two planning
workflows), estimate (nonparametric estimation from an endpoint CSV).
Identical config and seed produce byte-identical CSV artifacts for any
--threads value; the manifest additionally records wall time and versions.

Exit codes: 0 success, 2 error (a machine-readable record is printed to
stderr), 3 success with warnings (e.g. rejected ingest rows).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ConfigDocument, ConfigError, load_config
from .design import (
    run_coprimary_workflow,
    run_group_sequential_workflow,
)
from .estimators import (
    derive_idm_records,
    fit_piecewise_exponential,
    kaplan_meier,
    nelson_aalen,
    paired_coordinates,
)
from .report import (
    TRIAL_HEADER,
    write_csv,
    write_curves,
    write_manifest,
    write_scenario_summary,
    write_trial_dataset,
    write_workflow_report,
)
from .simulate import simulate_trial

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_WARNINGS = 3

_TRANSITIONS = {"h01": (0, 1), "h02": (0, 2), "h12": (1, 2)}


class IngestError(ValueError):
    pass


def ingest_endpoints(path):
    """Read an endpoint CSV into per-arm multistate records.

    The header must be exactly id, arm, pfs_time, pfs_event, os_time,
    os_event with events coded 1/0. Returns (records_by_arm, diagnostics);
    malformed rows are reported with their line numbers and skipped.
    """
    rows_by_arm: dict[str, list] = {}
    ids_by_arm: dict[str, list] = {}
    diagnostics = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        if header != TRIAL_HEADER:
            raise IngestError(
                f"{path}: header must be exactly {','.join(TRIAL_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                if len(row) != 6:
                    raise ValueError(f"expected 6 fields, got {len(row)}")
                pid = int(row[0])
                arm = row[1]
                pfs_time, os_time = float(row[2]), float(row[4])
                pfs_event, os_event = row[3].strip(), row[5].strip()
                if pfs_event not in ("0", "1") or os_event not in ("0", "1"):
                    raise ValueError("event indicators must be coded 1/0")
                if not arm:
                    raise ValueError("empty arm label")
                endpoint_row = (pfs_time, int(pfs_event), os_time, int(os_event))
                derive_idm_records([endpoint_row])  # row-level validation
            except ValueError as exc:
                diagnostics.append((lineno, str(exc)))
                continue
            rows_by_arm.setdefault(arm, []).append(endpoint_row)
            ids_by_arm.setdefault(arm, []).append(pid)
    records_by_arm = {
        arm: derive_idm_records(rows, ids_by_arm[arm]) for arm, rows in rows_by_arm.items()
    }
    return records_by_arm, diagnostics


def _cmd_analytic(doc: ConfigDocument, out: Path) -> int:
    write_curves(out, doc.scenario, doc.run.horizon, doc.run.grid_points)
    write_scenario_summary(out, doc.scenario)
    return EXIT_OK


def _cmd_simulate(doc: ConfigDocument, out: Path) -> int:
    # raw dataset export has no event target to size against; use the
    # configured enrollment or a plain default
    n = doc.n_patients if doc.n_patients is not None else 500
    for rep in range(doc.run.n_rep):
        records = simulate_trial(doc.scenario, n, doc.run.master_seed, rep)
        write_trial_dataset(out / f"trial_{rep:05d}.csv", records)
    return EXIT_OK


def _build_workflow_kwargs(doc: ConfigDocument):
    design = doc.design
    if design.pfs.target_power != design.os.target_power:
        raise ConfigError(
            "design.endpoints", "workflows support one common target power"
        )
    kwargs = dict(
        scenario=doc.scenario,
        global_alpha=design.global_alpha,
        split=(design.pfs.alpha, design.os.alpha),
        target_power=design.os.target_power,
        n_rep=doc.run.n_rep,
        master_seed=doc.run.master_seed,
        n_patients=doc.n_patients,
        n_jobs=doc.run.threads,
    )
    return kwargs


def _cmd_design_coprimary(doc: ConfigDocument, out: Path) -> int:
    report = run_coprimary_workflow(**_build_workflow_kwargs(doc))
    write_workflow_report(out, report)
    return EXIT_OK


def _cmd_design_gs(doc: ConfigDocument, out: Path) -> int:
    kwargs = _build_workflow_kwargs(doc)
    if doc.design.os.schedule is not None and len(doc.design.os.schedule) == 2:
        kwargs["os_schedule"] = doc.design.os.schedule
    report = run_group_sequential_workflow(**kwargs)
    write_workflow_report(out, report)
    return EXIT_OK


def _cmd_estimate(doc: ConfigDocument, out: Path) -> int:
    if doc.data is None:
        raise ConfigError("data", "the estimate command needs a data block")
    records_by_arm, diagnostics = ingest_endpoints(doc.data.endpoints_csv)
    if not records_by_arm:
        raise IngestError(f"{doc.data.endpoints_csv}: no valid rows")

    na_by_transition: dict[str, dict[str, object]] = {}
    for arm, records in sorted(records_by_arm.items()):
        pfs = [(t.exit, t.to_state is not None) for r in records for t in r.transitions[:1]]
        km_pfs = kaplan_meier([t for t, _ in pfs], [e for _, e in pfs])
        os_rows = [
            (r.transitions[-1].exit, r.transitions[-1].to_state == 2) for r in records
        ]
        km_os = kaplan_meier([t for t, _ in os_rows], [e for _, e in os_rows])
        write_csv(
            out / f"km_pfs_{arm}.csv", ["t", "survival"],
            list(zip(km_pfs.times, km_pfs.values)),
        )
        write_csv(
            out / f"km_os_{arm}.csv", ["t", "survival"],
            list(zip(km_os.times, km_os.values)),
        )
        for name, transition in _TRANSITIONS.items():
            na = nelson_aalen(records, transition)
            na_by_transition.setdefault(name, {})[arm] = na
            write_csv(
                out / f"na_{name}_{arm}.csv", ["t", "cumulative_hazard"],
                list(zip(na.times, na.values)),
            )

    arms = sorted(records_by_arm)
    if len(arms) == 2:
        for name, by_arm in na_by_transition.items():
            times, va, vb = paired_coordinates(by_arm[arms[0]], by_arm[arms[1]])
            write_csv(
                out / f"ph_diag_{name}.csv",
                ["t", f"cumhaz_{arms[0]}", f"cumhaz_{arms[1]}"],
                list(zip(times, va, vb)),
            )

    if doc.data.breaks:
        rows = []
        for arm, records in sorted(records_by_arm.items()):
            for name, breaks in sorted(doc.data.breaks.items()):
                fit = fit_piecewise_exponential(records, _TRANSITIONS[name], breaks)
                for i, b in enumerate(fit.breaks):
                    rows.append(
                        [arm, name, b, fit.rates[i], fit.events[i],
                         fit.exposure[i], int(fit.zero_exposure[i])]
                    )
        write_csv(
            out / "piecewise_fit.csv",
            ["arm", "transition", "interval_start", "rate", "events",
             "exposure", "zero_exposure"],
            rows,
        )

    if diagnostics:
        write_csv(out / "ingest_diagnostics.csv", ["line", "problem"], diagnostics)
        return EXIT_WARNINGS
    return EXIT_OK


_COMMANDS = {
    "analytic": _cmd_analytic,
    "simulate": _cmd_simulate,
    "design-coprimary": _cmd_design_coprimary,
    "design-gs": _cmd_design_gs,
    "estimate": _cmd_estimate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trialmsm",
        description="Illness-death model trial design engine for PFS and OS endpoints",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override run.master_seed")
        p.add_argument("--reps", type=int, default=None, help="override run.n_rep")
        p.add_argument("--threads", type=int, default=None, help="override run.threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        doc = load_config(args.config)
        run = doc.run
        if args.seed is not None:
            run = replace(run, master_seed=args.seed)
        if args.reps is not None:
            run = replace(run, n_rep=args.reps)
        if args.threads is not None:
            run = replace(run, threads=args.threads)
        doc = replace(doc, run=run)

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for warning in doc.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        status = _COMMANDS[args.command](doc, out)
        write_manifest(out, doc, args.command, time.time() - started)
        return status
    except (ConfigError, IngestError, OSError, ValueError) as exc:
        record = {
            "error": type(exc).__name__,
            "message": str(exc),
        }
        if isinstance(exc, ConfigError):
            record["path"] = exc.path
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
