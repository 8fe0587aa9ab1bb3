"""Run configuration: YAML schema, validation, and rendering.

The configuration is a three-block document (scenario / design / run) with
an optional data block for estimation runs. Validation is strict: unknown
keys are rejected and every error message carries the exact path of the
offending key. Defaults are filled in at parse time so the echoed document
in the run manifest states the complete effective configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import yaml

from .analytic import ArmHazards
from .hazards import (
    ConstantHazard,
    EntryShiftedHazard,
    HazardSpec,
    PiecewiseHazard,
    WeibullHazard,
)
from .simulate import Accrual, Arm, Scenario

__all__ = [
    "ConfigError",
    "ConfigDocument",
    "DesignSettings",
    "EndpointSettings",
    "RunSettings",
    "DataSettings",
    "parse_config",
    "load_config",
    "render_config",
]


class ConfigError(ValueError):
    """Schema violation with the path of the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _require_mapping(node, path):
    if not isinstance(node, dict):
        raise ConfigError(path, "expected a mapping")
    return node


def _check_keys(node, path, required, optional=()):
    unknown = set(node) - set(required) - set(optional)
    if unknown:
        raise ConfigError(path, f"unknown keys: {sorted(unknown)}")
    missing = [k for k in required if k not in node]
    if missing:
        raise ConfigError(path, f"missing keys: {missing}")


def _number(node, path, minimum=None, strict_min=False):
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(path, "expected a number")
    x = float(node)
    if not math.isfinite(x):
        raise ConfigError(path, "must be finite")
    if minimum is not None:
        if strict_min and not x > minimum:
            raise ConfigError(path, f"must be > {minimum}")
        if not strict_min and not x >= minimum:
            raise ConfigError(path, f"must be >= {minimum}")
    return x


def _integer(node, path, minimum=None):
    if isinstance(node, bool) or not isinstance(node, int):
        raise ConfigError(path, "expected an integer")
    if minimum is not None and node < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return node


# -- hazard specs --------------------------------------------------------------

_HAZARD_KINDS = ("constant", "piecewise", "weibull", "entry_shifted")


def _parse_hazard(node, path) -> HazardSpec:
    node = _require_mapping(node, path)
    kind = node.get("kind")
    if kind not in _HAZARD_KINDS:
        raise ConfigError(f"{path}.kind", f"must be one of {list(_HAZARD_KINDS)}")
    try:
        if kind == "constant":
            _check_keys(node, path, ("kind", "rate"))
            return ConstantHazard(_number(node["rate"], f"{path}.rate", 0.0))
        if kind == "piecewise":
            _check_keys(node, path, ("kind", "breaks", "rates"))
            breaks = node["breaks"]
            rates = node["rates"]
            if not isinstance(breaks, list) or not isinstance(rates, list):
                raise ConfigError(path, "breaks and rates must be lists")
            return PiecewiseHazard(
                tuple(_number(b, f"{path}.breaks[{i}]", 0.0) for i, b in enumerate(breaks)),
                tuple(_number(r, f"{path}.rates[{i}]", 0.0) for i, r in enumerate(rates)),
            )
        if kind == "weibull":
            _check_keys(node, path, ("kind", "shape", "scale"))
            return WeibullHazard(
                _number(node["shape"], f"{path}.shape", 0.0, strict_min=True),
                _number(node["scale"], f"{path}.scale", 0.0, strict_min=True),
            )
        _check_keys(node, path, ("kind", "inner"), optional=("mode",))
        mode = node.get("mode", "clock_reset")
        if mode not in ("clock_reset", "clock_forward"):
            raise ConfigError(f"{path}.mode", "must be clock_reset or clock_forward")
        return EntryShiftedHazard(
            _parse_hazard(node["inner"], f"{path}.inner"), mode.replace("_", "-")
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _render_hazard(spec: HazardSpec) -> dict:
    if isinstance(spec, ConstantHazard):
        return {"kind": "constant", "rate": spec.rate_value}
    if isinstance(spec, PiecewiseHazard):
        return {"kind": "piecewise", "breaks": list(spec.breaks), "rates": list(spec.rates)}
    if isinstance(spec, WeibullHazard):
        return {"kind": "weibull", "shape": spec.shape, "scale": spec.scale}
    if isinstance(spec, EntryShiftedHazard):
        return {
            "kind": "entry_shifted",
            "mode": spec.mode.replace("-", "_"),
            "inner": _render_hazard(spec.inner),
        }
    raise TypeError(f"cannot render hazard spec {spec!r}")


# -- blocks ---------------------------------------------------------------------


def _parse_arm(node, path) -> Arm:
    node = _require_mapping(node, path)
    _check_keys(node, path, ("label", "hazards"), optional=("weight",))
    label = node["label"]
    if not isinstance(label, str) or not label:
        raise ConfigError(f"{path}.label", "expected a nonempty string")
    hz = _require_mapping(node["hazards"], f"{path}.hazards")
    _check_keys(hz, f"{path}.hazards", ("h01", "h02", "h12"))
    try:
        hazards = ArmHazards(
            _parse_hazard(hz["h01"], f"{path}.hazards.h01"),
            _parse_hazard(hz["h02"], f"{path}.hazards.h02"),
            _parse_hazard(hz["h12"], f"{path}.hazards.h12"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}.hazards", str(exc)) from exc
    weight = _number(node.get("weight", 1.0), f"{path}.weight", 0.0, strict_min=True)
    return Arm(label, hazards, weight)


def _parse_scenario(node, path, warnings) -> tuple[Scenario, int | None]:
    node = _require_mapping(node, path)
    _check_keys(
        node, path, ("arms",),
        optional=("label", "censoring", "accrual", "reference", "n_patients", "null_variant"),
    )
    arms_node = node["arms"]
    if not isinstance(arms_node, list) or len(arms_node) < 2:
        raise ConfigError(f"{path}.arms", "expected a list of at least two arms")
    arms = tuple(_parse_arm(a, f"{path}.arms[{i}]") for i, a in enumerate(arms_node))

    if "censoring" in node:
        censoring = _parse_hazard(node["censoring"], f"{path}.censoring")
    else:
        censoring = None
        warnings.append(
            f"{path}.censoring: missing; defaulting to no censoring (rate 0)"
        )

    if "accrual" in node:
        acc = _require_mapping(node["accrual"], f"{path}.accrual")
        _check_keys(acc, f"{path}.accrual", ("kind",), optional=("duration",))
        kind = acc["kind"]
        if kind not in ("instantaneous", "uniform"):
            raise ConfigError(f"{path}.accrual.kind", "must be instantaneous or uniform")
        duration = _number(acc.get("duration", 0.0), f"{path}.accrual.duration", 0.0)
        try:
            accrual = Accrual(kind, duration)
        except ValueError as exc:
            raise ConfigError(f"{path}.accrual", str(exc)) from exc
    else:
        accrual = Accrual()

    n_patients = None
    if "n_patients" in node:
        n_patients = _integer(node["n_patients"], f"{path}.n_patients", 2)

    try:
        scenario = Scenario(
            arms=arms,
            censoring=censoring,
            accrual=accrual,
            null_variant=bool(node.get("null_variant", False)),
            reference_label=node.get("reference"),
            label=str(node.get("label", "")),
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    return scenario, n_patients


@dataclass(frozen=True)
class EndpointSettings:
    alpha: float
    target_power: float = 0.8
    interim: bool = False
    schedule: tuple[int, ...] | None = None  # explicit event targets


@dataclass(frozen=True)
class DesignSettings:
    global_alpha: float = 0.05
    pfs: EndpointSettings = field(default_factory=lambda: EndpointSettings(alpha=0.01))
    os: EndpointSettings = field(default_factory=lambda: EndpointSettings(alpha=0.04))


def _parse_endpoint(node, path, default_alpha) -> EndpointSettings:
    if node is None:
        return EndpointSettings(alpha=default_alpha)
    node = _require_mapping(node, path)
    _check_keys(node, path, (), optional=("alpha", "target_power", "interim", "schedule"))
    alpha = _number(node.get("alpha", default_alpha), f"{path}.alpha", 0.0, strict_min=True)
    if alpha >= 1.0:
        raise ConfigError(f"{path}.alpha", "must be < 1")
    power = _number(node.get("target_power", 0.8), f"{path}.target_power", 0.0, strict_min=True)
    if power >= 1.0:
        raise ConfigError(f"{path}.target_power", "must be < 1")
    schedule = None
    if "schedule" in node:
        sched = node["schedule"]
        if not isinstance(sched, list) or not sched:
            raise ConfigError(f"{path}.schedule", "expected a nonempty list of event targets")
        schedule = tuple(
            _integer(x, f"{path}.schedule[{i}]", 1) for i, x in enumerate(sched)
        )
        if any(a >= b for a, b in zip(schedule, schedule[1:])):
            raise ConfigError(f"{path}.schedule", "event targets must be strictly increasing")
    interim = bool(node.get("interim", False))
    if schedule is not None and len(schedule) > (2 if interim else 1):
        raise ConfigError(f"{path}.schedule", "at most one interim analysis is supported")
    return EndpointSettings(alpha=alpha, target_power=power, interim=interim, schedule=schedule)


def _parse_design(node, path) -> DesignSettings:
    if node is None:
        return DesignSettings()
    node = _require_mapping(node, path)
    _check_keys(node, path, (), optional=("global_alpha", "endpoints"))
    global_alpha = _number(node.get("global_alpha", 0.05), f"{path}.global_alpha", 0.0, True)
    endpoints = node.get("endpoints", {})
    endpoints = _require_mapping(endpoints, f"{path}.endpoints") if endpoints else {}
    _check_keys(endpoints, f"{path}.endpoints", (), optional=("pfs", "os"))
    pfs = _parse_endpoint(endpoints.get("pfs"), f"{path}.endpoints.pfs", 0.01)
    os_ = _parse_endpoint(endpoints.get("os"), f"{path}.endpoints.os", 0.04)
    if pfs.interim:
        raise ConfigError(f"{path}.endpoints.pfs.interim", "only the OS endpoint may have an interim")
    if abs(pfs.alpha + os_.alpha - global_alpha) > 1e-9:
        raise ConfigError(
            f"{path}.endpoints", "endpoint alphas must add up to the global alpha"
        )
    return DesignSettings(global_alpha=global_alpha, pfs=pfs, os=os_)


@dataclass(frozen=True)
class RunSettings:
    n_rep: int = 10_000
    master_seed: int = 1
    threads: int = 1
    out_dir: str = "out"
    horizon: float = 12.0
    grid_points: int = 121


def _parse_run(node, path) -> RunSettings:
    if node is None:
        return RunSettings()
    node = _require_mapping(node, path)
    _check_keys(
        node, path, (),
        optional=("n_rep", "master_seed", "threads", "out_dir", "horizon", "grid_points"),
    )
    out_dir = node.get("out_dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError(f"{path}.out_dir", "expected a string")
    return RunSettings(
        n_rep=_integer(node.get("n_rep", 10_000), f"{path}.n_rep", 1),
        master_seed=_integer(node.get("master_seed", 1), f"{path}.master_seed", 0),
        threads=_integer(node.get("threads", 1), f"{path}.threads", 1),
        out_dir=out_dir,
        horizon=_number(node.get("horizon", 12.0), f"{path}.horizon", 0.0, strict_min=True),
        grid_points=_integer(node.get("grid_points", 121), f"{path}.grid_points", 2),
    )


@dataclass(frozen=True)
class DataSettings:
    endpoints_csv: str
    breaks: dict[str, tuple[float, ...]] = field(default_factory=dict)


def _parse_data(node, path) -> DataSettings | None:
    if node is None:
        return None
    node = _require_mapping(node, path)
    _check_keys(node, path, ("endpoints_csv",), optional=("breaks",))
    csv_path = node["endpoints_csv"]
    if not isinstance(csv_path, str) or not csv_path:
        raise ConfigError(f"{path}.endpoints_csv", "expected a file path")
    breaks = {}
    if "breaks" in node:
        bnode = _require_mapping(node["breaks"], f"{path}.breaks")
        _check_keys(bnode, f"{path}.breaks", (), optional=("h01", "h02", "h12"))
        for key, val in bnode.items():
            if not isinstance(val, list) or not val:
                raise ConfigError(f"{path}.breaks.{key}", "expected a list of break times")
            breaks[key] = tuple(
                _number(b, f"{path}.breaks.{key}[{i}]", 0.0) for i, b in enumerate(val)
            )
    return DataSettings(endpoints_csv=csv_path, breaks=breaks)


@dataclass(frozen=True)
class ConfigDocument:
    scenario: Scenario
    n_patients: int | None
    design: DesignSettings
    run: RunSettings
    data: DataSettings | None = None
    warnings: tuple[str, ...] = ()


def parse_config(text: str) -> ConfigDocument:
    """Parse and validate a YAML configuration document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"not valid YAML: {exc}") from exc
    if raw is None:
        raise ConfigError("<document>", "empty document")
    raw = _require_mapping(raw, "<document>")
    _check_keys(raw, "<document>", ("scenario",), optional=("design", "run", "data"))
    warnings: list[str] = []
    scenario, n_patients = _parse_scenario(raw["scenario"], "scenario", warnings)
    design = _parse_design(raw.get("design"), "design")
    run = _parse_run(raw.get("run"), "run")
    data = _parse_data(raw.get("data"), "data")
    return ConfigDocument(
        scenario=scenario,
        n_patients=n_patients,
        design=design,
        run=run,
        data=data,
        warnings=tuple(warnings),
    )


def load_config(path) -> ConfigDocument:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def render_config(doc: ConfigDocument) -> str:
    """Serialize a document back to YAML; parse(render(doc)) == doc."""
    scenario = doc.scenario
    scen: dict = {
        "label": scenario.label,
        "arms": [
            {
                "label": a.label,
                "weight": a.weight,
                "hazards": {
                    "h01": _render_hazard(a.hazards.h01),
                    "h02": _render_hazard(a.hazards.h02),
                    "h12": _render_hazard(a.hazards.h12),
                },
            }
            for a in scenario.arms
        ],
        "reference": scenario.reference_label,
        "null_variant": scenario.null_variant,
    }
    if scenario.censoring is not None:
        scen["censoring"] = _render_hazard(scenario.censoring)
    if scenario.accrual.kind == "uniform":
        scen["accrual"] = {"kind": "uniform", "duration": scenario.accrual.duration}
    else:
        scen["accrual"] = {"kind": "instantaneous"}
    if doc.n_patients is not None:
        scen["n_patients"] = doc.n_patients

    def endpoint_dict(e: EndpointSettings) -> dict:
        out: dict = {"alpha": e.alpha, "target_power": e.target_power, "interim": e.interim}
        if e.schedule is not None:
            out["schedule"] = list(e.schedule)
        return out

    body = {
        "scenario": scen,
        "design": {
            "global_alpha": doc.design.global_alpha,
            "endpoints": {
                "pfs": endpoint_dict(doc.design.pfs),
                "os": endpoint_dict(doc.design.os),
            },
        },
        "run": {
            "n_rep": doc.run.n_rep,
            "master_seed": doc.run.master_seed,
            "threads": doc.run.threads,
            "out_dir": doc.run.out_dir,
            "horizon": doc.run.horizon,
            "grid_points": doc.run.grid_points,
        },
    }
    if doc.data is not None:
        data: dict = {"endpoints_csv": doc.data.endpoints_csv}
        if doc.data.breaks:
            data["breaks"] = {k: list(v) for k, v in doc.data.breaks.items()}
        body["data"] = data
    return yaml.safe_dump(body, sort_keys=False)
