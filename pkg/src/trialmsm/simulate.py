"""Trial data generation from the illness-death model.

A patient trajectory is built as a nested pair of competing-risks draws:
the waiting time in the initial state comes from inverting the all-cause
hazard h01 + h02 at a unit-exponential draw, the destination (progression
or death) from a binomial experiment with probability h01(t0) / (h01 +
h02)(t0), and, for progressors, the residual lifetime from the
post-progression hazard conditional on the entry time.

Randomness is counter-based: replication r of a run with master seed s uses
a Philox generator keyed by (s, r), and patient i consumes exactly the six
uniforms of row i of one (n, 6) draw matrix (slots: arm, entry, all-cause
mass, branch, post-progression mass, censoring mass). Any scheduling of
replications across workers therefore yields byte-identical trials, and a
cohort of n patients is a prefix of any larger cohort with the same key,
which is what gives event-count calibration true common random numbers
across differently sized candidate trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analytic import ArmHazards
from .hazards import (
    ConstantHazard,
    EntryShiftedHazard,
    HazardSpec,
    combined_hazard,
    hazard_at,
    invert_cumulative_hazard,
)

__all__ = [
    "Accrual",
    "Arm",
    "Scenario",
    "PatientPath",
    "ObservedRecord",
    "DataCut",
    "simulate_patient",
    "observe",
    "simulate_trial",
    "datacut",
]

PROGRESSION = "progression"
DEATH = "death"


@dataclass(frozen=True)
class Accrual:
    """Study entry pattern: everyone at calendar 0, or uniform over a window."""

    kind: str = "instantaneous"
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in ("instantaneous", "uniform"):
            raise ValueError(f"unknown accrual kind {self.kind!r}")
        if self.kind == "uniform" and not (self.duration > 0.0):
            raise ValueError("uniform accrual needs a positive duration")
        if self.kind == "instantaneous" and self.duration != 0.0:
            raise ValueError("instantaneous accrual has no duration")


@dataclass(frozen=True)
class Arm:
    label: str
    hazards: ArmHazards
    weight: float = 1.0

    def __post_init__(self):
        if not (self.weight > 0.0):
            raise ValueError("allocation weight must be positive")


@dataclass(frozen=True)
class Scenario:
    """A randomized trial configuration.

    The reference arm (default: the last one, conventionally the control
    group) supplies the hazards for every arm when ``null_variant`` is set,
    which is how the no-treatment-effect hypothesis is simulated.
    """

    arms: tuple[Arm, ...]
    censoring: HazardSpec | None = None
    accrual: Accrual = field(default_factory=Accrual)
    null_variant: bool = False
    reference_label: str | None = None
    label: str = ""

    def __post_init__(self):
        if len(self.arms) < 2:
            raise ValueError("a scenario needs at least two arms")
        labels = [a.label for a in self.arms]
        if len(set(labels)) != len(labels):
            raise ValueError("arm labels must be unique")
        ref = self.reference_label if self.reference_label is not None else labels[-1]
        if ref not in labels:
            raise ValueError(f"reference arm {ref!r} not among arm labels")
        object.__setattr__(self, "reference_label", ref)

    @property
    def reference_arm(self) -> Arm:
        return next(a for a in self.arms if a.label == self.reference_label)

    def effective_hazards(self, arm_index: int) -> ArmHazards:
        if self.null_variant:
            return self.reference_arm.hazards
        return self.arms[arm_index].hazards

    def as_null(self) -> "Scenario":
        return replace(self, null_variant=True)

    def allocation_probabilities(self) -> np.ndarray:
        w = np.array([a.weight for a in self.arms], dtype=float)
        return w / w.sum()


@dataclass(frozen=True)
class PatientPath:
    """Latent multistate trajectory before censoring is applied."""

    t0: float
    first_transition: str  # PROGRESSION or DEATH
    t1: float | None = None
    entry_time: float = 0.0
    censor_offset: float = math.inf

    def __post_init__(self):
        if self.first_transition not in (PROGRESSION, DEATH):
            raise ValueError(f"unknown first transition {self.first_transition!r}")
        if (self.t1 is not None) != (self.first_transition == PROGRESSION):
            raise ValueError("t1 must be present exactly for progressors")
        if self.t0 < 0 or self.entry_time < 0 or (self.t1 is not None and self.t1 < 0):
            raise ValueError("times must be >= 0")


@dataclass(frozen=True)
class ObservedRecord:
    """One patient's censored endpoint data plus calendar offsets for data cuts."""

    patient_id: int
    arm: str
    pfs_time: float
    pfs_event: bool
    os_time: float
    os_event: bool
    progression_observed: bool
    entry_time: float = 0.0

    def __post_init__(self):
        if self.pfs_time > self.os_time:
            raise ValueError("pfs_time cannot exceed os_time")
        if self.progression_observed and not self.pfs_event:
            raise ValueError("observed progression implies a PFS event")
        if self.os_event and not self.pfs_event:
            raise ValueError("a death is always a PFS event")
        if not self.progression_observed and self.pfs_time != self.os_time:
            raise ValueError("without observed progression the endpoint times coincide")


def simulate_patient(arm: ArmHazards, rng: np.random.Generator) -> PatientPath:
    """Draw one latent trajectory (no entry stagger, no censoring)."""
    e0 = rng.exponential()
    t0 = invert_cumulative_hazard(combined_hazard(arm.h01, arm.h02), 0.0, e0)
    u = rng.uniform()
    # the binomial draw is consumed even when t0 is infinite (cure tail) to
    # keep the per-patient draw layout fixed
    if math.isinf(t0):
        return PatientPath(t0=t0, first_transition=DEATH)
    r01 = hazard_at(arm.h01, t0)
    r02 = hazard_at(arm.h02, t0)
    total = r01 + r02
    p_prog = r01 / total if total > 0.0 else 0.0
    if u < p_prog:
        e1 = rng.exponential()
        t_death = _invert_post_progression(arm.h12, t0, e1)
        return PatientPath(t0=t0, first_transition=PROGRESSION, t1=t_death - t0)
    rng.exponential()  # keep slot parity with the progression branch
    return PatientPath(t0=t0, first_transition=DEATH)


def _invert_post_progression(h12: HazardSpec, t0, mass):
    if isinstance(h12, EntryShiftedHazard):
        return invert_cumulative_hazard(h12, t0, mass, entry=t0)
    return invert_cumulative_hazard(h12, t0, mass)


def observe(path: PatientPath, censor_offset: float | None = None) -> ObservedRecord:
    """Apply random censoring to a latent path.

    Ties go to the event: a patient censored exactly at an event time counts
    as an event, matching the events-before-censorings estimator convention.
    A patient censored while progressed keeps the PFS event but has OS
    censored.
    """
    c = path.censor_offset if censor_offset is None else censor_offset
    if c < 0:
        raise ValueError("censoring time must be >= 0")
    progressed = path.first_transition == PROGRESSION
    death_time = path.t0 + path.t1 if progressed else path.t0

    pfs_event = path.t0 <= c
    pfs_time = min(path.t0, c)
    os_event = death_time <= c
    os_time = min(death_time, c)
    return ObservedRecord(
        patient_id=0,
        arm="",
        pfs_time=pfs_time,
        pfs_event=bool(pfs_event),
        os_time=os_time,
        os_event=bool(os_event),
        progression_observed=bool(progressed and pfs_event),
        entry_time=path.entry_time,
    )


# -- vectorized cohort generation -------------------------------------------

_N_DRAW_SLOTS = 6  # arm, entry, all-cause mass, branch, post-progression mass, censoring


@dataclass
class TrialData:
    """Column-oriented trial dataset; the engine's working representation."""

    arm: np.ndarray
    entry: np.ndarray
    pfs_time: np.ndarray
    pfs_event: np.ndarray
    os_time: np.ndarray
    os_event: np.ndarray
    progression_observed: np.ndarray

    @property
    def n(self) -> int:
        return self.arm.shape[0]


def _replication_rng(master_seed: int, replication_index: int) -> np.random.Generator:
    if not (0 <= master_seed < 2**64):
        raise ValueError("master seed must fit in an unsigned 64-bit integer")
    if replication_index < 0:
        raise ValueError("replication index must be >= 0")
    key = np.array([master_seed, replication_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate_cohort(
    scenario: Scenario, n_patients: int, master_seed: int, replication_index: int
) -> TrialData:
    """Generate one replication as arrays; deterministic in (seed, replication)."""
    if n_patients < 2:
        raise ValueError("need at least two patients")
    rng = _replication_rng(master_seed, replication_index)
    n = n_patients

    # one row of uniforms per patient keeps draws prefix-stable across n
    draws = rng.random((n, _N_DRAW_SLOTS))
    u_arm, u_entry, u0, u_branch, u1, u_cens = draws.T
    e0 = -np.log1p(-u0)
    e1 = -np.log1p(-u1)
    e_cens = -np.log1p(-u_cens)

    probs = scenario.allocation_probabilities()
    arm_idx = np.searchsorted(np.cumsum(probs), u_arm, side="right").astype(np.int16)
    arm_idx = np.minimum(arm_idx, len(probs) - 1)

    if scenario.accrual.kind == "uniform":
        entry = u_entry * scenario.accrual.duration
    else:
        entry = np.zeros(n)

    t0 = np.empty(n)
    progressed = np.zeros(n, dtype=bool)
    death_time = np.empty(n)
    for j in range(len(scenario.arms)):
        sel = arm_idx == j
        if not np.any(sel):
            continue
        hz = scenario.effective_hazards(j)
        allcause = combined_hazard(hz.h01, hz.h02)
        tj = invert_cumulative_hazard(allcause, 0.0, e0[sel])
        finite = np.isfinite(tj)
        r01 = np.where(finite, hazard_at(hz.h01, np.where(finite, tj, 0.0)), 0.0)
        r02 = np.where(finite, hazard_at(hz.h02, np.where(finite, tj, 0.0)), 0.0)
        tot = r01 + r02
        p_prog = np.divide(r01, tot, out=np.zeros_like(tot), where=tot > 0.0)
        prog = (u_branch[sel] < p_prog) & finite
        dt = np.where(finite, tj, np.inf)
        if np.any(prog):
            t_entry = tj[prog]
            dt_prog = _invert_post_progression(hz.h12, t_entry, e1[sel][prog])
            dt = dt.copy()
            dt[prog] = dt_prog
        t0[sel] = tj
        progressed[sel] = prog
        death_time[sel] = dt

    if scenario.censoring is None:
        censor = np.full(n, np.inf)
    else:
        censor = invert_cumulative_hazard(scenario.censoring, 0.0, e_cens)

    pfs_event = t0 <= censor
    pfs_time = np.minimum(t0, censor)
    os_event = death_time <= censor
    os_time = np.minimum(death_time, censor)
    return TrialData(
        arm=arm_idx,
        entry=entry,
        pfs_time=pfs_time,
        pfs_event=pfs_event,
        os_time=os_time,
        os_event=os_event,
        progression_observed=progressed & pfs_event,
    )


def simulate_trial(
    scenario: Scenario, n_patients: int, master_seed: int, replication_index: int = 0
) -> list[ObservedRecord]:
    """One complete randomized trial as observed records."""
    data = simulate_cohort(scenario, n_patients, master_seed, replication_index)
    labels = [a.label for a in scenario.arms]
    return [
        ObservedRecord(
            patient_id=i,
            arm=labels[data.arm[i]],
            pfs_time=float(data.pfs_time[i]),
            pfs_event=bool(data.pfs_event[i]),
            os_time=float(data.os_time[i]),
            os_event=bool(data.os_event[i]),
            progression_observed=bool(data.progression_observed[i]),
            entry_time=float(data.entry[i]),
        )
        for i in range(data.n)
    ]


@dataclass(frozen=True)
class DataCut:
    """An event-driven administrative censoring snapshot."""

    cut_time: float
    records: tuple[ObservedRecord, ...]
    shortfall: bool
    observed_events: int


def datacut(records, endpoint: str, event_target: int) -> DataCut:
    """Administratively censor all follow-up at the event_target-th event.

    The cut lands at the calendar time of the target-th pooled event of the
    endpoint, ties broken by patient id so that the snapshot contains exactly
    the target number of events. If the data never accumulate enough events
    the cut time is +inf and the shortfall flag is set.
    """
    if endpoint not in ("pfs", "os"):
        raise ValueError("endpoint must be 'pfs' or 'os'")
    if event_target < 1:
        raise ValueError("event target must be >= 1")

    def ev(r):
        return (r.pfs_time, r.pfs_event) if endpoint == "pfs" else (r.os_time, r.os_event)

    events = sorted(
        (r.entry_time + ev(r)[0], r.patient_id) for r in records if ev(r)[1]
    )
    if len(events) < event_target:
        return DataCut(math.inf, tuple(records), True, len(events))
    cut_time, _ = events[event_target - 1]
    # ids of events that share the cut timestamp but fall beyond the target
    flipped = {pid for t, pid in events[event_target:] if t == cut_time}

    snapshot = []
    for r in records:
        fu = cut_time - r.entry_time
        if fu <= 0.0:
            continue  # not yet enrolled at the cut
        # survival of an observation is decided in calendar space, with the
        # same arithmetic that defined the cut; reconstructing follow-up as
        # cut - entry can round below the event time by one ulp
        pfs_time, pfs_event = r.pfs_time, r.pfs_event
        os_time, os_event = r.os_time, r.os_event
        if r.entry_time + os_time > cut_time:
            os_time, os_event = min(fu, os_time), False
        if r.entry_time + pfs_time > cut_time:
            pfs_time, pfs_event = min(fu, pfs_time), False
        if pfs_time > os_time:
            pfs_time = os_time
        if r.patient_id in flipped:
            # a tied event beyond the target becomes censored at the cut;
            # a flipped death without observed progression drags the PFS
            # event along to keep the record coherent
            if endpoint == "pfs":
                pfs_event = False
                if not r.progression_observed:
                    os_event = False
            else:
                os_event = False
                if not r.progression_observed:
                    pfs_event = False
        if os_event and not pfs_event:
            os_event = False  # tie corner: the PFS event carrying this death was flipped
        prog = r.progression_observed and pfs_event
        snapshot.append(
            ObservedRecord(
                patient_id=r.patient_id,
                arm=r.arm,
                pfs_time=pfs_time,
                pfs_event=pfs_event,
                os_time=os_time,
                os_event=os_event,
                progression_observed=prog,
                entry_time=r.entry_time,
            )
        )
    return DataCut(cut_time, tuple(snapshot), False, event_target)
