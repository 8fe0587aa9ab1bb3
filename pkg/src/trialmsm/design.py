"""Monte Carlo design engine: type-I-error, power, and event-count calibration.

Two workflows are orchestrated here. The co-primary design tests each
endpoint once at its own event-driven data cut; the group-sequential design
adds an OS interim analysis performed at the calendar time of the PFS final
data cut, with boundaries frozen at their planned values.

Enrollment convention: a simulated trial is sized at ENROLLMENT_BUFFER
(10%) above the largest event target it must reach, mirroring the 10%
censoring the scenarios specify. Calibration re-sizes every candidate
trial the same way; because patient draws are prefix-stable in the cohort
size, candidates still share common random numbers.

Hot path: with instantaneous accrual, administrative censoring at an
event-driven cut leaves every earlier risk set unchanged, so the log-rank
statistic after the k-th event is a prefix sum over events in calendar
order; one pass per replication covers all analyses. Replications are
independent counter-based work units and summaries merge integer counts,
so results are identical for any worker count or execution order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from . import analytic
from .analytic import ArmHazards, average_hr_os, hr_pfs
from .hazards import EntryShiftedHazard, cumulative_hazard, hazard_at
from .inference import (
    EndpointPlan,
    GSDesign,
    bvn_lower,
    gs_boundaries,
    logrank_z,
    norm_ppf,
    schoenfeld_events,
    single_stage_plan,
    two_stage_plan,
)
from .simulate import Scenario, datacut, simulate_cohort, simulate_trial

__all__ = [
    "AnalysisSummary",
    "EndpointSummary",
    "SimSummary",
    "CalibrationResult",
    "expected_event_fraction",
    "default_n_patients",
    "estimate_alpha",
    "estimate_power",
    "calibrate_events",
    "run_coprimary_workflow",
    "run_group_sequential_workflow",
    "EndpointPlanReport",
    "WorkflowReport",
]

ENROLLMENT_BUFFER = 1.1
PLANNING_HORIZON = 12.0
AHR_HORIZON = 60.0


# -- summary containers ------------------------------------------------------


@dataclass(frozen=True)
class AnalysisSummary:
    """Rejection rate and realized event counts of one scheduled analysis."""

    event_target: int | None  # None: the analysis is calendar-timed
    reject_rate: float
    reject_se: float
    events_mean: float
    events_sd: float
    events_min: int
    events_max: int
    shortfall_count: int = 0


@dataclass(frozen=True)
class EndpointSummary:
    analyses: tuple[AnalysisSummary, ...]
    cumulative_rates: tuple[float, ...]  # rejection at or before each analysis
    overall_rate: float
    overall_se: float


@dataclass(frozen=True)
class SimSummary:
    """Empirical operating characteristics over replications."""

    endpoints: dict[str, EndpointSummary]
    global_rate: float
    global_se: float
    joint_rate: float
    joint_se: float
    n_rep: int
    master_seed: int
    n_patients: int
    scenario_label: str = ""

    def endpoint_rate(self, name: str) -> float:
        return self.endpoints[name].overall_rate


def _mc_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


# -- fast per-replication log-rank curves ------------------------------------


@dataclass
class _LogrankCurve:
    """Prefix log-rank statistic over pooled events in calendar order.

    ev_times[k-1] is the time of the k-th event; u[k-1] and v[k-1] the
    accumulated numerator and hypergeometric variance of the snapshot cut
    exactly there (tied events split by patient order, matching datacut).
    """

    ev_times: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def n_events(self) -> int:
        return self.ev_times.shape[0]

    def z_at(self, k: int) -> float | None:
        if k < 1 or k > self.n_events:
            return None
        var = self.v[k - 1]
        if var <= 0.0:
            return None
        return float(self.u[k - 1] / math.sqrt(var))

    def events_by(self, t: float) -> int:
        return int(np.searchsorted(self.ev_times, t, side="right"))


def _logrank_curve(times, events, in_group_a) -> _LogrankCurve:
    """Build the prefix curve; requires instantaneous accrual (entry == 0)."""
    n = times.shape[0]
    na = int(in_group_a.sum())
    t_all = np.sort(times)
    t_a = np.sort(times[in_group_a])

    order = np.lexsort((np.arange(n)[events], times[events]))
    ev_t = times[events][order]
    ev_a = in_group_a[events][order].astype(float)
    m = ev_t.shape[0]
    if m == 0:
        return _LogrankCurve(ev_t, np.zeros(0), np.zeros(0))

    y = (n - np.searchsorted(t_all, ev_t, side="left")).astype(float)
    ya = (na - np.searchsorted(t_a, ev_t, side="left")).astype(float)
    w = np.divide(ya, y, out=np.zeros(m), where=y > 0)

    new_group = np.empty(m, dtype=bool)
    new_group[0] = True
    new_group[1:] = ev_t[1:] != ev_t[:-1]
    group_id = np.cumsum(new_group) - 1
    group_start = np.flatnonzero(new_group)

    pos = np.arange(m)
    d_p = (pos - group_start[group_id] + 1).astype(float)  # events so far at this time
    ca = np.cumsum(ev_a)
    base = ca[group_start] - ev_a[group_start]
    da_p = ca - base[group_id]

    # full-group increments accumulated over completed groups
    group_end = np.append(group_start[1:], m) - 1
    d_full = d_p[group_end]
    da_full = da_p[group_end]
    w_g = w[group_start]
    y_g = y[group_start]
    u_full = da_full - d_full * w_g
    v_full = np.where(
        y_g > 1, d_full * w_g * (1.0 - w_g) * (y_g - d_full) / np.maximum(y_g - 1, 1), 0.0
    )
    u_before = np.concatenate([[0.0], np.cumsum(u_full)])[group_id]
    v_before = np.concatenate([[0.0], np.cumsum(v_full)])[group_id]

    u = u_before + (da_p - d_p * w)
    v = v_before + np.where(y > 1, d_p * w * (1.0 - w) * (y - d_p) / np.maximum(y - 1, 1), 0.0)
    return _LogrankCurve(ev_t, u, v)


# -- per-replication evaluation ----------------------------------------------


@dataclass
class _RepResult:
    pfs_reject: bool
    pfs_shortfall: bool
    os_rejects: tuple[bool, ...]
    os_events: tuple[int, ...]
    os_shortfalls: tuple[bool, ...]

    @property
    def os_overall(self) -> bool:
        return any(self.os_rejects)


def _curves_for_rep(scenario, n_patients, master_seed, rep):
    data = simulate_cohort(scenario, n_patients, master_seed, rep)
    if len(scenario.arms) != 2:
        raise ValueError("the design engine compares exactly two arms")
    in_a = data.arm == 0
    pfs_curve = _logrank_curve(data.pfs_time, data.pfs_event, in_a)
    os_curve = _logrank_curve(data.os_time, data.os_event, in_a)
    return pfs_curve, os_curve


def _eval_rep_fast(pfs_curve, os_curve, design: GSDesign) -> _RepResult:
    pfs_plan = design.pfs.final
    z = pfs_curve.z_at(pfs_plan.event_target)
    pfs_shortfall = pfs_curve.n_events < pfs_plan.event_target
    pfs_reject = z is not None and abs(z) >= pfs_plan.critical_value
    t_pfs_final = (
        float(pfs_curve.ev_times[pfs_plan.event_target - 1]) if not pfs_shortfall else math.inf
    )

    os_analyses = design.os.analyses
    if len(os_analyses) == 1:
        final = os_analyses[0]
        zf = os_curve.z_at(final.event_target)
        shortfall = os_curve.n_events < final.event_target
        reject = zf is not None and abs(zf) >= final.critical_value
        events = min(final.event_target, os_curve.n_events)
        return _RepResult(pfs_reject, pfs_shortfall, (reject,), (events,), (shortfall,))

    interim, final = os_analyses
    fa_shortfall = os_curve.n_events < final.event_target
    k_ia = os_curve.events_by(t_pfs_final) if math.isfinite(t_pfs_final) else 0
    # the interim happens only if it precedes the final data cut
    ia_happens = 0 < k_ia < final.event_target
    z1 = os_curve.z_at(k_ia) if ia_happens else None
    ia_reject = z1 is not None and abs(z1) >= interim.critical_value
    z2 = os_curve.z_at(final.event_target)
    fa_reject = z2 is not None and abs(z2) >= final.critical_value
    fa_events = min(final.event_target, os_curve.n_events)
    return _RepResult(
        pfs_reject,
        pfs_shortfall,
        (ia_reject, fa_reject),
        (k_ia, fa_events),
        (not ia_happens, fa_shortfall),
    )


def _snapshot_logrank(times, events, in_a, entry, cut_time):
    """Two-sample log-rank of the administrative snapshot at a calendar cut.

    Event survival is decided in calendar space (entry + time vs cut), the
    same arithmetic that defines event-driven cuts. Returns (z, events).
    """
    fu = cut_time - entry
    live = fu > 0
    if not np.any(live):
        return None, 0
    e = events[live] & (entry[live] + times[live] <= cut_time)
    t = np.where(e, times[live], np.minimum(times[live], fu[live]))
    a = in_a[live]
    k = int(e.sum())
    if k == 0:
        return None, 0
    n = t.shape[0]
    na = int(a.sum())
    t_all = np.sort(t)
    t_a = np.sort(t[a])
    ut, inv = np.unique(t[e], return_inverse=True)
    d = np.bincount(inv, minlength=len(ut)).astype(float)
    da = np.bincount(inv, weights=a[e].astype(float), minlength=len(ut))
    y = (n - np.searchsorted(t_all, ut, side="left")).astype(float)
    ya = (na - np.searchsorted(t_a, ut, side="left")).astype(float)
    w = np.divide(ya, y, out=np.zeros_like(y), where=y > 0)
    u = float(np.sum(da - d * w))
    v = float(
        np.sum(np.where(y > 1, d * w * (1.0 - w) * (y - d) / np.maximum(y - 1, 1), 0.0))
    )
    if v <= 0.0:
        return None, k
    return u / math.sqrt(v), k


def _kth_calendar_event(times, events, entry, k):
    ce = entry[events] + times[events]
    if ce.shape[0] < k:
        return math.inf
    return float(np.partition(ce, k - 1)[k - 1])


def _eval_rep_staggered(scenario, design, n_patients, master_seed, rep) -> _RepResult:
    """Vectorized per-replication evaluation under staggered entry."""
    data = simulate_cohort(scenario, n_patients, master_seed, rep)
    if len(scenario.arms) != 2:
        raise ValueError("the design engine compares exactly two arms")
    in_a = data.arm == 0

    pfs_plan = design.pfs.final
    t_pfs = _kth_calendar_event(data.pfs_time, data.pfs_event, data.entry, pfs_plan.event_target)
    pfs_shortfall = math.isinf(t_pfs)
    pfs_reject = False
    if not pfs_shortfall:
        z, _ = _snapshot_logrank(data.pfs_time, data.pfs_event, in_a, data.entry, t_pfs)
        pfs_reject = z is not None and abs(z) >= pfs_plan.critical_value

    os_analyses = design.os.analyses
    final = os_analyses[-1]
    t_fa = _kth_calendar_event(data.os_time, data.os_event, data.entry, final.event_target)
    fa_shortfall = math.isinf(t_fa)
    fa_reject = False
    fa_events = final.event_target
    if fa_shortfall:
        fa_events = int(data.os_event.sum())
    else:
        z2, _ = _snapshot_logrank(data.os_time, data.os_event, in_a, data.entry, t_fa)
        fa_reject = z2 is not None and abs(z2) >= final.critical_value
    if len(os_analyses) == 1:
        return _RepResult(
            pfs_reject, pfs_shortfall, (fa_reject,), (fa_events,), (fa_shortfall,)
        )

    interim = os_analyses[0]
    ia_reject = False
    ia_happens = False
    k_ia = 0
    if not pfs_shortfall and t_pfs < t_fa:
        z1, k_ia = _snapshot_logrank(data.os_time, data.os_event, in_a, data.entry, t_pfs)
        ia_happens = 0 < k_ia < final.event_target
        if ia_happens:
            ia_reject = z1 is not None and abs(z1) >= interim.critical_value
    return _RepResult(
        pfs_reject,
        pfs_shortfall,
        (ia_reject, fa_reject),
        (k_ia, fa_events),
        (not ia_happens, fa_shortfall),
    )


def _eval_rep_general(scenario, design, n_patients, master_seed, rep) -> _RepResult:
    """datacut + logrank on explicit records; the reference route for tests."""
    records = simulate_trial(scenario, n_patients, master_seed, rep)
    arm_a = scenario.arms[0].label

    def test_at_cut(endpoint, target, critical):
        cut = datacut(records, endpoint, target)
        if cut.shortfall:
            return False, True, cut.observed_events, math.inf
        a = [r for r in cut.records if r.arm == arm_a]
        b = [r for r in cut.records if r.arm != arm_a]
        if endpoint == "pfs":
            args = (
                [r.pfs_time for r in a], [r.pfs_event for r in a],
                [r.pfs_time for r in b], [r.pfs_event for r in b],
            )
        else:
            args = (
                [r.os_time for r in a], [r.os_event for r in a],
                [r.os_time for r in b], [r.os_event for r in b],
            )
        z = logrank_z(*args)
        return (z is not None and abs(z) >= critical), False, target, cut.cut_time

    pfs_plan = design.pfs.final
    pfs_reject, pfs_short, _, t_pfs = test_at_cut(
        "pfs", pfs_plan.event_target, pfs_plan.critical_value
    )

    os_analyses = design.os.analyses
    if len(os_analyses) == 1:
        final = os_analyses[0]
        rej, short, events, _ = test_at_cut("os", final.event_target, final.critical_value)
        return _RepResult(pfs_reject, pfs_short, (rej,), (events,), (short,))

    interim, final = os_analyses
    fa_cut = datacut(records, "os", final.event_target)
    k_ia = 0
    ia_reject = False
    ia_happens = False
    if math.isfinite(t_pfs) and t_pfs < fa_cut.cut_time:
        # administrative snapshot exactly at the PFS final calendar time;
        # event survival decided in calendar space, as in datacut
        clipped = []
        for r in records:
            fu = t_pfs - r.entry_time
            if fu <= 0.0:
                continue
            os_event = bool(r.os_event and r.entry_time + r.os_time <= t_pfs)
            os_time = r.os_time if os_event else min(r.os_time, fu)
            clipped.append((r.arm == arm_a, os_time, os_event))
        k_ia = sum(1 for _, _, e in clipped if e)
        ia_happens = 0 < k_ia < final.event_target
        if ia_happens and any(e for _, _, e in clipped):
            z1 = logrank_z(
                [t for a, t, _ in clipped if a],
                [e for a, _, e in clipped if a],
                [t for a, t, _ in clipped if not a],
                [e for a, _, e in clipped if not a],
            )
            ia_reject = z1 is not None and abs(z1) >= interim.critical_value
    fa_reject, fa_short, fa_events, _ = test_at_cut(
        "os", final.event_target, final.critical_value
    )
    return _RepResult(
        pfs_reject,
        pfs_short,
        (ia_reject, fa_reject),
        (k_ia, fa_events),
        (not ia_happens, fa_short),
    )


# -- replication loops with deterministic merging ----------------------------


@dataclass
class _SummaryAccumulator:
    n: int = 0
    pfs_rejects: int = 0
    pfs_shortfalls: int = 0
    os_first_rejects: np.ndarray | None = None
    os_cumulative: np.ndarray | None = None
    os_shortfalls: np.ndarray | None = None
    os_events_sum: np.ndarray | None = None
    os_events_sumsq: np.ndarray | None = None
    os_events_min: np.ndarray | None = None
    os_events_max: np.ndarray | None = None
    any_reject: int = 0
    both_reject: int = 0

    def _init_arrays(self, n_analyses):
        self.os_first_rejects = np.zeros(n_analyses, dtype=np.int64)
        self.os_cumulative = np.zeros(n_analyses, dtype=np.int64)
        self.os_shortfalls = np.zeros(n_analyses, dtype=np.int64)
        self.os_events_sum = np.zeros(n_analyses, dtype=np.int64)
        self.os_events_sumsq = np.zeros(n_analyses, dtype=np.int64)
        self.os_events_min = np.full(n_analyses, np.iinfo(np.int64).max, dtype=np.int64)
        self.os_events_max = np.zeros(n_analyses, dtype=np.int64)

    def add(self, rep: _RepResult):
        if self.os_first_rejects is None:
            self._init_arrays(len(rep.os_rejects))
        self.n += 1
        self.pfs_rejects += rep.pfs_reject
        self.pfs_shortfalls += rep.pfs_shortfall
        rejected_before = False
        for i, (rej, ev, short) in enumerate(
            zip(rep.os_rejects, rep.os_events, rep.os_shortfalls)
        ):
            self.os_first_rejects[i] += rej and not rejected_before
            rejected_before = rejected_before or rej
            self.os_cumulative[i] += rejected_before
            self.os_shortfalls[i] += short
            self.os_events_sum[i] += ev
            self.os_events_sumsq[i] += ev * ev
            self.os_events_min[i] = min(self.os_events_min[i], ev)
            self.os_events_max[i] = max(self.os_events_max[i], ev)
        os_overall = rep.os_overall
        self.any_reject += rep.pfs_reject or os_overall
        self.both_reject += rep.pfs_reject and os_overall

    def merge(self, other: "_SummaryAccumulator"):
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        self.n += other.n
        self.pfs_rejects += other.pfs_rejects
        self.pfs_shortfalls += other.pfs_shortfalls
        self.os_first_rejects += other.os_first_rejects
        self.os_cumulative += other.os_cumulative
        self.os_shortfalls += other.os_shortfalls
        self.os_events_sum += other.os_events_sum
        self.os_events_sumsq += other.os_events_sumsq
        self.os_events_min = np.minimum(self.os_events_min, other.os_events_min)
        self.os_events_max = np.maximum(self.os_events_max, other.os_events_max)
        self.any_reject += other.any_reject
        self.both_reject += other.both_reject
        return self


def _run_summary_chunk(args):
    scenario, design, n_patients, master_seed, rep_lo, rep_hi = args
    acc = _SummaryAccumulator()
    fast = scenario.accrual.kind == "instantaneous"
    for rep in range(rep_lo, rep_hi):
        if fast:
            pfs_curve, os_curve = _curves_for_rep(scenario, n_patients, master_seed, rep)
            res = _eval_rep_fast(pfs_curve, os_curve, design)
        else:
            res = _eval_rep_staggered(scenario, design, n_patients, master_seed, rep)
        acc.add(res)
    return acc


def _parallel_map(fn, chunk_args, n_jobs):
    if n_jobs <= 1 or len(chunk_args) <= 1:
        return [fn(a) for a in chunk_args]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, chunk_args))


def _chunk_ranges(n_rep, n_jobs):
    n_chunks = max(1, min(n_rep, n_jobs * 4))
    edges = np.linspace(0, n_rep, n_chunks + 1, dtype=int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _summarize(acc: _SummaryAccumulator, design, master_seed, n_patients, label) -> SimSummary:
    n = acc.n
    pfs_rate = acc.pfs_rejects / n
    pfs_plan = design.pfs.final
    pfs_summary = EndpointSummary(
        analyses=(
            AnalysisSummary(
                pfs_plan.event_target,
                pfs_rate,
                _mc_se(pfs_rate, n),
                float(pfs_plan.event_target),
                0.0,
                pfs_plan.event_target,
                pfs_plan.event_target,
                acc.pfs_shortfalls,
            ),
        ),
        cumulative_rates=(pfs_rate,),
        overall_rate=pfs_rate,
        overall_se=_mc_se(pfs_rate, n),
    )

    os_analyses = []
    n_os = len(design.os.analyses)
    for i, plan in enumerate(design.os.analyses):
        rate = acc.os_first_rejects[i] / n
        mean = acc.os_events_sum[i] / n
        var = max(acc.os_events_sumsq[i] / n - mean * mean, 0.0)
        # interim analyses in a two-stage plan are calendar-timed; their
        # planned event target is reported as None with realized counts
        target = plan.event_target if (n_os == 1 or i == n_os - 1) else None
        os_analyses.append(
            AnalysisSummary(
                target,
                rate,
                _mc_se(rate, n),
                float(mean),
                math.sqrt(var),
                int(acc.os_events_min[i]),
                int(acc.os_events_max[i]),
                int(acc.os_shortfalls[i]),
            )
        )
    os_cum = tuple(float(c) / n for c in acc.os_cumulative)
    os_overall = os_cum[-1]
    os_summary = EndpointSummary(
        analyses=tuple(os_analyses),
        cumulative_rates=os_cum,
        overall_rate=os_overall,
        overall_se=_mc_se(os_overall, n),
    )

    global_rate = acc.any_reject / n
    joint_rate = acc.both_reject / n
    return SimSummary(
        endpoints={"pfs": pfs_summary, "os": os_summary},
        global_rate=global_rate,
        global_se=_mc_se(global_rate, n),
        joint_rate=joint_rate,
        joint_se=_mc_se(joint_rate, n),
        n_rep=n,
        master_seed=master_seed,
        n_patients=n_patients,
        scenario_label=label,
    )


def _run_summary(scenario, design, n_rep, master_seed, n_patients, n_jobs) -> SimSummary:
    chunks = [
        (scenario, design, n_patients, master_seed, lo, hi)
        for lo, hi in _chunk_ranges(n_rep, n_jobs)
    ]
    accs = _parallel_map(_run_summary_chunk, chunks, n_jobs)
    total = _SummaryAccumulator()
    for a in accs:
        total = total.merge(a)
    return _summarize(total, design, master_seed, n_patients, scenario.label)


# -- public estimation operations --------------------------------------------


def expected_event_fraction(
    scenario: Scenario, endpoint: str, horizon: float = PLANNING_HORIZON
) -> float:
    """Expected fraction of patients with an observed endpoint event by horizon.

    Allocation-weighted over arms, accounting for random censoring;
    instantaneous accrual assumed. A sizing diagnostic: the reciprocal says
    how many patients one observed event costs by the horizon.
    """
    probs = scenario.allocation_probabilities()
    total = 0.0
    for j, arm in enumerate(scenario.arms):
        hz = scenario.effective_hazards(j)
        total += probs[j] * _arm_event_fraction(hz, scenario.censoring, endpoint, horizon)
    return float(total)


def _arm_event_fraction(hz: ArmHazards, censoring, endpoint, horizon) -> float:
    if isinstance(hz.h12, EntryShiftedHazard) and hz.h12.mode == "clock-reset":
        raise NotImplementedError(
            "event fractions under clock-reset hazards need explicit n_patients"
        )

    def surv_censor(u):
        if censoring is None:
            return 1.0
        return math.exp(-cumulative_hazard(censoring, 0.0, u))

    if endpoint == "pfs":
        def density(u):
            return analytic.h_pfs(hz, u) * analytic.s_pfs(hz, u)
    else:
        def density(u):
            return float(
                hazard_at(hz.h02, u) * analytic.p00(hz, u)
                + hazard_at(hz.h12, u) * analytic.p01(hz, u)
            )

    val, _ = quad(lambda u: surv_censor(u) * density(u), 0.0, horizon, limit=200)
    return val


def default_n_patients(design: GSDesign, buffer: float = ENROLLMENT_BUFFER) -> int:
    """Total enrollment for an event-driven design.

    The trial is sized at ``buffer`` times its largest final event target
    (default 10% above, absorbing the scenarios' 10% censoring). Sizing
    scales with the event target rather than with a fixed calendar horizon;
    this is what reproduces the reference operating characteristics, since
    the timing of an event-driven cut, and with it the window over which a
    non-proportional effect is averaged, depends directly on enrollment.
    """
    largest = max(plan.final.event_target for plan in design.plans.values())
    return int(math.ceil(buffer * largest))


def estimate_alpha(
    scenario: Scenario,
    design: GSDesign,
    n_rep: int,
    master_seed: int,
    n_patients: int | None = None,
    n_jobs: int = 1,
) -> SimSummary:
    """Empirical type-I-error rates under the null variant of a scenario.

    Replications with an unreachable event target count as non-rejections
    and are reported through the per-analysis shortfall counters.
    """
    if not scenario.null_variant:
        raise ValueError("type-I-error estimation requires a null-variant scenario")
    n_patients = n_patients or default_n_patients(design)
    return _run_summary(scenario, design, n_rep, master_seed, n_patients, n_jobs)


def estimate_power(
    scenario: Scenario,
    design: GSDesign,
    n_rep: int,
    master_seed: int,
    n_patients: int | None = None,
    n_jobs: int = 1,
) -> SimSummary:
    """Empirical per-endpoint, overall, and joint power under a scenario."""
    n_patients = n_patients or default_n_patients(design)
    return _run_summary(scenario, design, n_rep, master_seed, n_patients, n_jobs)


# -- event-count calibration ---------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    events: int
    power: float
    trace: tuple[tuple[int, float], ...]
    monotonicity_flags: tuple[int, ...] = ()  # targets where power dipped beyond noise


def _retarget(design: GSDesign, endpoint: str, new_target: int) -> GSDesign:
    """Move one endpoint's final event target, keeping critical values frozen."""
    plan = design.plans[endpoint]
    if len(plan.analyses) == 1:
        new_plan = EndpointPlan(
            alpha=plan.alpha,
            analyses=(replace(plan.final, event_target=new_target),),
            spending=plan.spending,
        )
    else:
        interim, final = plan.analyses
        if new_target <= interim.event_target:
            # the retargeted final precedes the planned interim; the interim
            # can never happen, leaving a single analysis at the frozen
            # final boundary
            new_plan = EndpointPlan(
                alpha=plan.alpha,
                analyses=(
                    replace(final, event_target=new_target, cumulative_alpha=plan.alpha),
                ),
                spending=plan.spending,
            )
        else:
            new_plan = EndpointPlan(
                alpha=plan.alpha,
                analyses=(interim, replace(final, event_target=new_target)),
                spending=plan.spending,
            )
    if endpoint == "pfs":
        return GSDesign(pfs=new_plan, os=design.os, global_alpha=design.global_alpha)
    return GSDesign(pfs=design.pfs, os=new_plan, global_alpha=design.global_alpha)


def _calibrate_with_trace(
    scenario, design, endpoint, target_power, tolerance, n_rep, master_seed,
    n_jobs, n_patients=None, max_expansions: int = 5,
) -> CalibrationResult:
    other = "os" if endpoint == "pfs" else "pfs"
    other_target = design.plans[other].final.event_target
    plan = design.plans[endpoint]
    seed_target = plan.final.event_target
    # a fixed design re-sizes each candidate trial with its target; the
    # sequential design keeps the cohort sized for the planned trial (its
    # interim timing and boundaries were planned there), growing it only
    # when a candidate would otherwise be unreachable
    floor_target = seed_target if len(plan.analyses) > 1 else 0
    threshold = target_power - tolerance
    cache: dict[int, float] = {}
    trace: list[tuple[int, float]] = []

    def power(d):
        if d not in cache:
            trial_design = _retarget(design, endpoint, d)
            n = n_patients or int(
                math.ceil(ENROLLMENT_BUFFER * max(d, other_target, floor_target))
            )
            summary = _run_summary(scenario, trial_design, n_rep, master_seed, n, n_jobs)
            cache[d] = summary.endpoint_rate(endpoint)
        trace.append((d, cache[d]))
        return cache[d]

    # bracket [lo, hi] with power(lo) < threshold <= power(hi), expanding by
    # factor 2 from the Schoenfeld seed
    d0 = seed_target
    if power(d0) >= threshold:
        hi = d0
        lo = d0 // 2
        while lo >= 1 and power(lo) >= threshold:
            hi = lo
            lo //= 2
        if lo < 1:
            # even a single event clears the threshold
            return CalibrationResult(hi, cache[hi], tuple(trace))
    else:
        lo = d0
        hi = d0 * 2
        expansions = 0
        while power(hi) < threshold:
            lo = hi
            hi *= 2
            expansions += 1
            if expansions > max_expansions:
                raise ValueError(
                    f"target power unreachable below {hi} events; bracket not found"
                )
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if power(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    # flag power decreases along visited targets beyond two MC standard
    # errors; smaller wiggles are expected Monte Carlo noise under common
    # random numbers
    by_target = sorted(cache.items())
    flags = [
        d2
        for (d1, p1), (d2, p2) in zip(by_target, by_target[1:])
        if p2 < p1 - 2.0 * _mc_se(max(min(p1, 1 - 1e-12), 1e-12), n_rep)
    ]
    return CalibrationResult(hi, cache[hi], tuple(trace), tuple(flags))


def calibrate_events(
    scenario: Scenario,
    design: GSDesign,
    endpoint: str,
    target_power: float,
    tolerance: float = 0.005,
    n_rep: int = 10_000,
    master_seed: int = 1,
    n_patients: int | None = None,
    n_jobs: int = 1,
) -> int:
    """Smallest event target whose estimated power reaches target - tolerance.

    Integer bisection seeded at the design's planned event count with
    bracket expansion factor 2. Candidate trials are re-sized with the
    candidate target (unless n_patients is pinned) and share common random
    numbers through the prefix-stable patient draws. For a two-analysis OS
    plan the final count is calibrated with the interim boundary and its
    calendar timing held fixed.
    """
    if not (0.0 < target_power < 1.0):
        raise ValueError("target power must lie in (0, 1)")
    if endpoint not in ("pfs", "os"):
        raise ValueError("endpoint must be 'pfs' or 'os'")
    result = _calibrate_with_trace(
        scenario, design, endpoint, target_power, tolerance, n_rep, master_seed,
        n_jobs, n_patients=n_patients,
    )
    return result.events


# -- planning helpers ----------------------------------------------------------


def _os_median(arm: ArmHazards) -> float:
    hi = 1.0
    while analytic.s_os(arm, hi) > 0.5:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("overall survival median beyond search range")
    return brentq(lambda t: analytic.s_os(arm, t) - 0.5, 1e-9, hi, xtol=1e-10)


def _exponential_planning_fraction(
    scenario: Scenario, d_pfs: int, d_os_final: int, n_patients: int
) -> float:
    """Planned OS information fraction at the PFS final analysis.

    Planning-model convention: each arm's OS is approximated by an
    exponential matched to its illness-death median, PFS keeps its
    (constant-hazard) exponential law, and the interim lands where the
    expected observed PFS events reach their target.
    """
    probs = scenario.allocation_probabilities()
    censoring = scenario.censoring

    def surv_censor(u):
        if censoring is None:
            return 1.0
        return math.exp(-cumulative_hazard(censoring, 0.0, u))

    arm_rates = []
    for j, _arm in enumerate(scenario.arms):
        hz = scenario.effective_hazards(j)
        lam_os = math.log(2.0) / _os_median(hz)
        arm_rates.append((probs[j], analytic.h_pfs(hz, 0.0), lam_os))

    def expected_events(tau, which):
        total = 0.0
        for w, lam_pfs, lam_os in arm_rates:
            lam = lam_pfs if which == "pfs" else lam_os
            val, _ = quad(lambda u: surv_censor(u) * lam * math.exp(-lam * u), 0.0, tau)
            total += w * val
        return n_patients * total

    tau = brentq(lambda t: expected_events(t, "pfs") - d_pfs, 1e-9, 1e4, xtol=1e-8)
    return min(expected_events(tau, "os") / d_os_final, 0.99)


def _gs_inflation_factor(alpha: float, t1: float, power: float) -> float:
    """Required-drift inflation of a one-interim OBF design over a fixed design."""
    c1, c2 = gs_boundaries(alpha, (t1, 1.0))
    rho = math.sqrt(t1)
    fixed_drift = norm_ppf(1.0 - alpha / 2.0) + norm_ppf(power)

    def rect(a1, b1, a2, b2):
        return (
            bvn_lower(b1, b2, rho)
            - bvn_lower(a1, b2, rho)
            - bvn_lower(b1, a2, rho)
            + bvn_lower(a1, a2, rho)
        )

    def power_at(delta):
        m1 = delta * math.sqrt(t1)
        return 1.0 - rect(-c1 - m1, c1 - m1, -c2 - delta, c2 - delta)

    delta = brentq(lambda d: power_at(d) - power, fixed_drift * 0.8, fixed_drift * 2.0)
    return (delta / fixed_drift) ** 2


# -- workflows -----------------------------------------------------------------


@dataclass(frozen=True)
class EndpointPlanReport:
    endpoint: str
    target_hr: float
    schoenfeld_events: int
    planned_analyses: tuple[tuple[int, float], ...]  # (event target, critical value)


@dataclass(frozen=True)
class WorkflowReport:
    design_kind: str
    scenario_label: str
    n_patients: int
    planning: tuple[EndpointPlanReport, ...]
    design: GSDesign
    alpha_summary: SimSummary
    power_at_planned: SimSummary
    calibrated_events: dict[str, int]
    calibration: dict[str, CalibrationResult]
    power_at_calibrated: SimSummary
    notes: tuple[str, ...] = ()


def _scenario_pair(scenario: Scenario):
    if len(scenario.arms) != 2:
        raise ValueError("workflows compare exactly two arms")
    return scenario.arms[0].hazards, scenario.arms[1].hazards


def run_coprimary_workflow(
    scenario: Scenario,
    global_alpha: float = 0.05,
    split: tuple[float, float] = (0.01, 0.04),
    target_power: float = 0.8,
    n_rep: int = 10_000,
    master_seed: int = 1,
    n_patients: int | None = None,
    tolerance: float = 0.005,
    n_jobs: int = 1,
) -> WorkflowReport:
    """Plan, null-calibrate, and power-calibrate a two-endpoint fixed design.

    Step 1 seeds each endpoint's event target with the Schoenfeld count at
    its target hazard ratio (the constant PFS ratio; the time-averaged OS
    ratio). Step 2 estimates empirical significance levels under the null
    variant. Step 3 calibrates each endpoint's event count to the target
    power with common random numbers and reports joint power.
    """
    alpha_pfs, alpha_os = split
    if abs(alpha_pfs + alpha_os - global_alpha) > 1e-9:
        raise ValueError("alpha split must add up to the global level")
    trt, ctl = _scenario_pair(scenario)
    hr_p = hr_pfs(trt, ctl)
    ahr = average_hr_os(trt, ctl, AHR_HORIZON)
    d_pfs = schoenfeld_events(hr_p, alpha_pfs, target_power)
    d_os = schoenfeld_events(ahr, alpha_os, target_power)

    design = GSDesign(
        pfs=single_stage_plan(alpha_pfs, d_pfs),
        os=single_stage_plan(alpha_os, d_os),
        global_alpha=global_alpha,
    )
    planning = (
        EndpointPlanReport("pfs", hr_p, d_pfs, ((d_pfs, design.pfs.final.critical_value),)),
        EndpointPlanReport("os", ahr, d_os, ((d_os, design.os.final.critical_value),)),
    )

    alpha_summary = estimate_alpha(
        scenario.as_null(), design, n_rep, master_seed, n_patients, n_jobs
    )
    power_planned = estimate_power(scenario, design, n_rep, master_seed, n_patients, n_jobs)

    calibration = {
        name: _calibrate_with_trace(
            scenario, design, name, target_power, tolerance, n_rep, master_seed,
            n_jobs, n_patients=n_patients,
        )
        for name in ("pfs", "os")
    }
    calibrated = {k: v.events for k, v in calibration.items()}
    calibrated_design = GSDesign(
        pfs=single_stage_plan(alpha_pfs, calibrated["pfs"]),
        os=single_stage_plan(alpha_os, calibrated["os"]),
        global_alpha=global_alpha,
    )
    power_calibrated = estimate_power(
        scenario, calibrated_design, n_rep, master_seed, n_patients, n_jobs
    )
    return WorkflowReport(
        design_kind="coprimary",
        scenario_label=scenario.label,
        n_patients=n_patients or default_n_patients(design),
        planning=planning,
        design=design,
        alpha_summary=alpha_summary,
        power_at_planned=power_planned,
        calibrated_events=calibrated,
        calibration=calibration,
        power_at_calibrated=power_calibrated,
    )


def run_group_sequential_workflow(
    scenario: Scenario,
    global_alpha: float = 0.05,
    split: tuple[float, float] = (0.01, 0.04),
    target_power: float = 0.8,
    n_rep: int = 10_000,
    master_seed: int = 1,
    n_patients: int | None = None,
    tolerance: float = 0.005,
    os_schedule: tuple[int, int] | None = None,
    n_jobs: int = 1,
) -> WorkflowReport:
    """Plan and simulate the one-OS-interim group-sequential design.

    The OS interim is analyzed at the calendar time of the PFS final data
    cut; its planned event count enters only the boundary computation. Step
    3 recalibrates the OS final count holding the planned critical values
    and the interim timing fixed, and reports realized interim event
    counts. Passing os_schedule overrides the planned (interim, final)
    counts, e.g. to reproduce an externally planned design.
    """
    alpha_pfs, alpha_os = split
    if abs(alpha_pfs + alpha_os - global_alpha) > 1e-9:
        raise ValueError("alpha split must add up to the global level")
    trt, ctl = _scenario_pair(scenario)
    hr_p = hr_pfs(trt, ctl)
    ahr = average_hr_os(trt, ctl, AHR_HORIZON)
    d_pfs = schoenfeld_events(hr_p, alpha_pfs, target_power)

    notes = [
        "OS interim simulated at the calendar time of the PFS final data cut; "
        "critical values frozen at step-1 planning values throughout "
        "(no re-spending at realized interim information)."
    ]
    d_fixed = schoenfeld_events(ahr, alpha_os, target_power)
    if os_schedule is not None:
        d_ia, d_fa = os_schedule
        notes.append("externally supplied OS schedule")
    else:
        n_plan = n_patients or int(
            math.ceil(ENROLLMENT_BUFFER * max(d_fixed, d_pfs))
        )
        t1 = _exponential_planning_fraction(scenario, d_pfs, d_fixed, n_plan)
        d_fa = math.ceil(d_fixed * _gs_inflation_factor(alpha_os, t1, target_power))
        d_ia = math.ceil(t1 * d_fa)
        notes.append(
            "planned interim fraction from the median-matched exponential "
            "planning model at the default enrollment"
        )

    design = GSDesign(
        pfs=single_stage_plan(alpha_pfs, d_pfs),
        os=two_stage_plan(alpha_os, d_ia, d_fa),
        global_alpha=global_alpha,
    )
    planning = (
        EndpointPlanReport("pfs", hr_p, d_pfs, ((d_pfs, design.pfs.final.critical_value),)),
        EndpointPlanReport(
            "os",
            ahr,
            d_fixed,
            tuple((a.event_target, a.critical_value) for a in design.os.analyses),
        ),
    )

    alpha_summary = estimate_alpha(
        scenario.as_null(), design, n_rep, master_seed, n_patients, n_jobs
    )
    power_planned = estimate_power(scenario, design, n_rep, master_seed, n_patients, n_jobs)

    cal = _calibrate_with_trace(
        scenario, design, "os", target_power, tolerance, n_rep, master_seed,
        n_jobs, n_patients=n_patients,
    )
    calibrated_design = _retarget(design, "os", cal.events)
    power_calibrated = estimate_power(
        scenario, calibrated_design, n_rep, master_seed, n_patients, n_jobs
    )
    return WorkflowReport(
        design_kind="group-sequential",
        scenario_label=scenario.label,
        n_patients=n_patients or default_n_patients(design),
        planning=planning,
        design=design,
        alpha_summary=alpha_summary,
        power_at_planned=power_planned,
        calibrated_events={"pfs": d_pfs, "os": cal.events},
        calibration={"os": cal},
        power_at_calibrated=power_calibrated,
        notes=tuple(notes),
    )
