"""Monte Carlo trial design engine for jointly modeled PFS and OS endpoints.

A three-state illness-death process (initial, progression, death) drives
both endpoints: progression-free survival is the waiting time in the
initial state, overall survival the waiting time to death. The package
provides closed-form survival quantities, trial simulation with
event-driven data cuts, nonparametric estimation, log-rank based testing
with group-sequential boundaries, and the design workflows built on them.
"""

__version__ = "0.1.0"

from .analytic import (
    ArmHazards,
    CurveGrid,
    DegenerateParameterError,
    average_hr_os,
    h_os,
    h_pfs,
    hr_os,
    hr_pfs,
    joint_cdf,
    p00,
    p01,
    s_os,
    s_pfs,
)
from .config import ConfigDocument, ConfigError, load_config, parse_config, render_config
from .design import (
    SimSummary,
    WorkflowReport,
    calibrate_events,
    default_n_patients,
    estimate_alpha,
    estimate_power,
    expected_event_fraction,
    run_coprimary_workflow,
    run_group_sequential_workflow,
)
from .estimators import (
    MsmRecord,
    StepFunction,
    Transition,
    aalen_johansen,
    derive_idm_records,
    fit_piecewise_exponential,
    kaplan_meier,
    nelson_aalen,
)
from .hazards import (
    ConstantHazard,
    EntryShiftedHazard,
    HazardSpec,
    PiecewiseHazard,
    WeibullHazard,
    cumulative_hazard,
    hazard_at,
    invert_cumulative_hazard,
)
from .inference import (
    Analysis,
    EndpointPlan,
    GSDesign,
    gs_boundaries,
    logrank_z,
    obf_spending,
    schoenfeld_events,
    single_stage_plan,
    two_stage_plan,
)
from .simulate import (
    Accrual,
    Arm,
    DataCut,
    ObservedRecord,
    PatientPath,
    Scenario,
    datacut,
    observe,
    simulate_patient,
    simulate_trial,
)

__all__ = [name for name in dir() if not name.startswith("_")]
