"""Nonparametric and piecewise-parametric estimation from observed trial data.

Counting-process conventions used throughout: at tied times events precede
censorings, and simultaneous transitions of different types are evaluated
against the same pre-time risk set. Subjects enter the progression state's
risk set only strictly after their entry time (internal left-truncation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "StepFunction",
    "Transition",
    "MsmRecord",
    "derive_idm_records",
    "kaplan_meier",
    "nelson_aalen",
    "aalen_johansen",
    "PiecewiseFit",
    "fit_piecewise_exponential",
    "paired_coordinates",
]

TRANSITIONS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function: value(t) = values[last jump <= t]."""

    times: tuple[float, ...]
    values: tuple[float, ...]
    initial: float

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if len(times) != len(values):
            raise ValueError("times and values must have equal length")
        if any(a >= b for a, b in zip(times, times[1:])):
            raise ValueError("jump times must be strictly increasing")
        object.__setattr__(self, "_times_arr", np.asarray(times))
        object.__setattr__(
            self, "_lookup", np.concatenate([[float(self.initial)], np.asarray(values)])
        )

    def __call__(self, t):
        idx = np.searchsorted(self._times_arr, t, side="right")
        out = self._lookup[np.asarray(idx)]
        return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class Transition:
    """One observed sojourn: entry and exit times of a state, with destination.

    to_state None means the subject was censored while occupying from_state.
    """

    from_state: int
    to_state: int | None
    entry: float
    exit: float

    def __post_init__(self):
        if self.from_state not in (0, 1):
            raise ValueError("transitions start in state 0 or 1")
        if self.to_state is not None and (self.from_state, self.to_state) not in TRANSITIONS:
            raise ValueError(f"illegal transition {self.from_state}->{self.to_state}")
        if not (self.exit > self.entry or (self.to_state is None and self.exit == self.entry)):
            raise ValueError("exit must come after entry")


@dataclass(frozen=True)
class MsmRecord:
    patient_id: int
    transitions: tuple[Transition, ...]

    def __post_init__(self):
        if not 1 <= len(self.transitions) <= 2:
            raise ValueError("a record holds one or two sojourns")
        first = self.transitions[0]
        if first.from_state != 0 or first.entry != 0.0:
            raise ValueError("records start in state 0 at time 0")
        if len(self.transitions) == 2:
            second = self.transitions[1]
            if first.to_state != 1 or second.from_state != 1:
                raise ValueError("a second sojourn requires a 0->1 transition first")
            if second.entry != first.exit:
                raise ValueError("state-1 entry must equal the state-0 exit")


def derive_idm_records(rows, patient_ids=None) -> list[MsmRecord]:
    """Reconstruct multistate sojourns from endpoint rows.

    Each row is (pfs_time, pfs_event, os_time, os_event). A PFS event
    strictly before the OS time is a progression; equal times with an OS
    event are a direct death; a censored PFS is a censoring in the initial
    state. Inconsistent indicator combinations are rejected with the row
    index. A progression immediately censored (pfs_time == os_time, PFS
    event, OS censored) contributes only its 0->1 transition; the
    zero-length progression sojourn carries no information.
    """
    out = []
    for i, row in enumerate(rows):
        pfs_time, pfs_event, os_time, os_event = row
        pid = patient_ids[i] if patient_ids is not None else i
        pfs_event = bool(pfs_event)
        os_event = bool(os_event)
        if pfs_time < 0 or os_time < 0:
            raise ValueError(f"row {i}: negative endpoint time")
        if pfs_time > os_time:
            raise ValueError(f"row {i}: pfs_time exceeds os_time")
        if pfs_time < os_time:
            if not pfs_event:
                raise ValueError(
                    f"row {i}: follow-up continues past a censored PFS time"
                )
            dest = 2 if os_event else None
            out.append(
                MsmRecord(
                    pid,
                    (
                        Transition(0, 1, 0.0, pfs_time),
                        Transition(1, dest, pfs_time, os_time),
                    ),
                )
            )
        else:  # pfs_time == os_time
            if os_event:
                if not pfs_event:
                    raise ValueError(f"row {i}: death without a PFS event")
                out.append(MsmRecord(pid, (Transition(0, 2, 0.0, os_time),)))
            elif pfs_event:
                out.append(MsmRecord(pid, (Transition(0, 1, 0.0, pfs_time),)))
            else:
                out.append(MsmRecord(pid, (Transition(0, None, 0.0, pfs_time),)))
    return out


def kaplan_meier(times, events) -> StepFunction:
    """Product-limit survival estimator; ties process events before censorings."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=bool)
    if t.size == 0:
        raise ValueError("no observations")
    if np.any(t <= 0):
        raise ValueError("times must be positive")
    t_sorted = np.sort(t)
    ev_times = np.sort(t[e])
    ut = np.unique(ev_times)
    if ut.size == 0:
        return StepFunction((), (), 1.0)
    at_risk = t.size - np.searchsorted(t_sorted, ut, side="left")
    deaths = np.searchsorted(ev_times, ut, side="right") - np.searchsorted(
        ev_times, ut, side="left"
    )
    surv = np.cumprod(1.0 - deaths / at_risk)
    return StepFunction(tuple(ut), tuple(surv), 1.0)


def _state_intervals(records, state):
    """(entries, exits, event_exit_times_by_destination) for one state."""
    entries, exits = [], []
    dest_times = {m: [] for l, m in TRANSITIONS if l == state}
    for rec in records:
        for tr in rec.transitions:
            if tr.from_state != state:
                continue
            entries.append(tr.entry)
            exits.append(tr.exit)
            if tr.to_state is not None:
                dest_times[tr.to_state].append(tr.exit)
    return (
        np.sort(np.asarray(entries, dtype=float)),
        np.sort(np.asarray(exits, dtype=float)),
        {m: np.sort(np.asarray(v, dtype=float)) for m, v in dest_times.items()},
    )


def _risk_set(entries, exits, t):
    """Number observed in the state just prior to t: entry < t and exit >= t."""
    t = np.asarray(t, dtype=float)
    return np.searchsorted(entries, t, side="left") - np.searchsorted(exits, t, side="left")


def nelson_aalen(records, transition, risk_set_threshold: int = 1) -> StepFunction:
    """Cumulative transition hazard estimator for one transition.

    Increment at each observed transition time is (transitions at t) /
    (subjects in the source state just prior to t); the 1->2 risk set
    honors internal left-truncation. Increments where the risk set falls
    below risk_set_threshold are suppressed to zero, which with the default
    threshold of 1 is the plain estimator (empty risk sets contribute
    nothing rather than dividing by zero).
    """
    frm, to = transition
    if (frm, to) not in TRANSITIONS:
        raise ValueError(f"unsupported transition {frm}->{to}")
    entries, exits, dest_times = _state_intervals(records, frm)
    ev_times = dest_times[to]
    ut = np.unique(ev_times)
    if ut.size == 0:
        return StepFunction((), (), 0.0)
    d = np.searchsorted(ev_times, ut, side="right") - np.searchsorted(ev_times, ut, side="left")
    y = _risk_set(entries, exits, ut)
    keep = y >= max(risk_set_threshold, 1)
    inc = np.where(keep, d / np.maximum(y, 1), 0.0)
    return StepFunction(tuple(ut), tuple(np.cumsum(inc)), 0.0)


def aalen_johansen(records, s: float, t: float) -> np.ndarray:
    """Transition probability matrix estimate P(s, t) as a 3x3 array.

    Finite product of (I + dA(u)) over the observed transition times in
    (s, t]; rows sum to one by construction.
    """
    if s > t:
        raise ValueError("requires s <= t")
    entries0, exits0, dest0 = _state_intervals(records, 0)
    entries1, exits1, dest1 = _state_intervals(records, 1)
    times01, times02, times12 = dest0[1], dest0[2], dest1[2]
    all_times = np.unique(np.concatenate([times01, times02, times12]))
    all_times = all_times[(all_times > s) & (all_times <= t)]

    p = np.eye(3)
    if all_times.size == 0:
        return p

    def counts(sorted_times, ut):
        return np.searchsorted(sorted_times, ut, side="right") - np.searchsorted(
            sorted_times, ut, side="left"
        )

    d01 = counts(times01, all_times)
    d02 = counts(times02, all_times)
    d12 = counts(times12, all_times)
    y0 = _risk_set(entries0, exits0, all_times)
    y1 = _risk_set(entries1, exits1, all_times)

    p00, p01_, p02 = 1.0, 0.0, 0.0
    p11, p12 = 1.0, 0.0
    for i in range(all_times.size):
        h01 = d01[i] / y0[i] if y0[i] > 0 else 0.0
        h02 = d02[i] / y0[i] if y0[i] > 0 else 0.0
        h12 = d12[i] / y1[i] if y1[i] > 0 else 0.0
        p00, p01_, p02 = (
            p00 * (1.0 - h01 - h02),
            p00 * h01 + p01_ * (1.0 - h12),
            p00 * h02 + p01_ * h12 + p02,
        )
        p11, p12 = p11 * (1.0 - h12), p11 * h12 + p12
    p[0] = (p00, p01_, p02)
    p[1] = (0.0, p11, p12)
    return p


@dataclass(frozen=True)
class PiecewiseFit:
    """Occurrence/exposure rates per interval with zero-exposure diagnostics."""

    breaks: tuple[float, ...]
    rates: tuple[float, ...]
    events: tuple[int, ...]
    exposure: tuple[float, ...]

    @property
    def zero_exposure(self) -> tuple[bool, ...]:
        return tuple(x == 0.0 for x in self.exposure)


def fit_piecewise_exponential(records, transition, breaks) -> PiecewiseFit:
    """Maximum-likelihood piecewise-constant rates for one transition.

    Rate per interval is (transitions in interval) / (at-risk exposure time
    in interval); exposure honors left-truncated state-1 entry. Intervals
    with zero exposure report rate 0 and are flagged.
    """
    frm, to = transition
    if (frm, to) not in TRANSITIONS:
        raise ValueError(f"unsupported transition {frm}->{to}")
    breaks = tuple(float(b) for b in breaks)
    if not breaks or breaks[0] != 0.0 or any(a >= b for a, b in zip(breaks, breaks[1:])):
        raise ValueError("breaks must be ascending and start at 0")
    edges = np.asarray(breaks + (math.inf,))
    n_int = len(breaks)
    events = np.zeros(n_int, dtype=int)
    exposure = np.zeros(n_int)
    for rec in records:
        for tr in rec.transitions:
            if tr.from_state != frm:
                continue
            lo = np.clip(tr.entry, edges[:-1], edges[1:])
            hi = np.clip(tr.exit, edges[:-1], edges[1:])
            exposure += np.maximum(hi - lo, 0.0)
            if tr.to_state == to:
                idx = np.searchsorted(np.asarray(breaks), tr.exit, side="right") - 1
                events[idx] += 1
    rates = np.where(exposure > 0.0, events / np.maximum(exposure, 1e-300), 0.0)
    return PiecewiseFit(breaks, tuple(rates), tuple(int(x) for x in events), tuple(exposure))


def paired_coordinates(step_a: StepFunction, step_b: StepFunction):
    """Pointwise (A_a(t), A_b(t)) pairs at the union of jump times.

    The proportional-hazards diagnostic plots one group's cumulative hazard
    against the other's; slope fitting is left to plotting tools.
    """
    times = np.unique(np.concatenate([step_a.times, step_b.times]))
    return times, step_a(times), step_b(times)
