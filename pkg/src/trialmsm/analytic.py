"""Closed-form and semi-analytic quantities of the three-state illness-death model.

State 0 is pre-progression, state 1 is progressed, state 2 is dead. The
progression-free survival function equals the state-0 occupation probability
and the overall survival function adds the state-1 occupation probability.
With constant transition hazards everything below has a closed form; for
piecewise or Weibull hazards the state-1 occupation probability falls back to
deterministic adaptive quadrature (relative tolerance 1e-8).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .hazards import (
    ConstantHazard,
    EntryShiftedHazard,
    HazardSpec,
    cumulative_hazard,
    hazard_at,
)

__all__ = [
    "DegenerateParameterError",
    "ArmHazards",
    "CurveGrid",
    "p00",
    "p01",
    "s_pfs",
    "s_os",
    "joint_cdf",
    "h_pfs",
    "h_os",
    "hr_pfs",
    "hr_os",
    "average_hr_os",
]

_QUAD_RTOL = 1e-8


class DegenerateParameterError(ValueError):
    """Constant-hazard closed forms require h12 - h01 - h02 != 0."""


@dataclass(frozen=True)
class ArmHazards:
    """Transition hazards of one treatment arm.

    h01 drives progression, h02 death without progression, h12 death after
    progression. Only h12 may be entry-shifted.
    """

    h01: HazardSpec
    h02: HazardSpec
    h12: HazardSpec

    def __post_init__(self):
        for name in ("h01", "h02"):
            if isinstance(getattr(self, name), EntryShiftedHazard):
                raise ValueError(f"{name} cannot be entry-shifted; only the 1->2 transition may")

    @classmethod
    def constant(cls, l01: float, l02: float, l12: float) -> "ArmHazards":
        return cls(ConstantHazard(l01), ConstantHazard(l02), ConstantHazard(l12))

    @property
    def is_constant(self) -> bool:
        return all(
            isinstance(h, ConstantHazard) for h in (self.h01, self.h02, self.h12)
        )

    @property
    def is_markov(self) -> bool:
        h12 = self.h12
        return not (isinstance(h12, EntryShiftedHazard) and h12.mode == "clock-reset")

    def constant_rates(self) -> tuple[float, float, float]:
        if not self.is_constant:
            raise ValueError("operation requires constant transition hazards")
        return (self.h01.rate_value, self.h02.rate_value, self.h12.rate_value)

    def lambda012(self) -> float:
        """h12 - h01 - h02 in the constant case; must be nonzero for closed forms."""
        l01, l02, l12 = self.constant_rates()
        d = l12 - l01 - l02
        # relative tolerance: exact-zero tests on float rate arithmetic are
        # unreliable, and the closed forms cancel catastrophically nearby
        if abs(d) <= 1e-10 * max(l12, l01 + l02):
            raise DegenerateParameterError(
                "h12 - h01 - h02 must be nonzero for the constant-hazard closed forms"
            )
        return d


@dataclass(frozen=True)
class CurveGrid:
    """A function sampled on an ascending time grid."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if len(times) != len(values):
            raise ValueError("times and values must have equal length")
        if any(a >= b for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")


def _check_time(t):
    if np.any(np.asarray(t) < 0.0):
        raise ValueError("time must be >= 0")


def p00(arm: ArmHazards, t):
    """Probability of still occupying the initial state at time t."""
    _check_time(t)
    mass = cumulative_hazard(arm.h01, 0.0, t) + cumulative_hazard(arm.h02, 0.0, t)
    return np.exp(-mass) if np.ndim(t) else math.exp(-mass)


def _p01_constant(arm: ArmHazards, t):
    l01, l02, l12 = arm.constant_rates()
    d = arm.lambda012()
    t = np.asarray(t, dtype=float) if np.ndim(t) else t
    return (l01 / d) * (np.exp(-(l01 + l02) * t) - np.exp(-l12 * t))


def _survival_in_state1(arm: ArmHazards, entry, t):
    """P(no 1->2 transition in (entry, t] | entered state 1 at entry)."""
    h12 = arm.h12
    if isinstance(h12, EntryShiftedHazard):
        mass = cumulative_hazard(h12, entry, t, entry=entry)
    else:
        mass = cumulative_hazard(h12, entry, t)
    return math.exp(-mass)


def _p01_general(arm: ArmHazards, t: float) -> float:
    if t == 0.0:
        return 0.0

    def integrand(u):
        return p00(arm, u) * hazard_at(arm.h01, u) * _survival_in_state1(arm, u, t)

    # kink locations of the integrand: piecewise breaks of the 0-exit hazards,
    # of h12 on the study clock, and reflected h12 breaks under clock-reset
    kinks = {b for h in (arm.h01, arm.h02) for b in getattr(h, "breaks", ())}
    h12 = arm.h12
    if isinstance(h12, EntryShiftedHazard):
        inner_breaks = getattr(h12.inner, "breaks", ())
        if h12.mode == "clock-reset":
            kinks.update(t - b for b in inner_breaks)
        else:
            kinks.update(inner_breaks)
    else:
        kinks.update(getattr(h12, "breaks", ()))
    pts = sorted(b for b in kinks if 0.0 < b < t)
    val, _ = quad(integrand, 0.0, t, points=pts or None, epsrel=_QUAD_RTOL, epsabs=0.0, limit=200)
    return val


def p01(arm: ArmHazards, t):
    """Probability of occupying the progression state at time t."""
    _check_time(t)
    if arm.is_constant:
        return _p01_constant(arm, t)
    if np.ndim(t):
        return np.array([_p01_general(arm, float(u)) for u in np.asarray(t).ravel()]).reshape(
            np.shape(t)
        )
    return _p01_general(arm, float(t))


def s_pfs(arm: ArmHazards, t):
    """Marginal progression-free survival function."""
    return p00(arm, t)


def s_os(arm: ArmHazards, t):
    """Marginal overall survival function; always >= s_pfs."""
    return p00(arm, t) + p01(arm, t)


def joint_cdf(arm: ArmHazards, u: float, v: float) -> float:
    """P(PFS <= u, OS <= v) for u <= v, assembled from transition probabilities.

    Requires the Markov (clock-forward) post-progression hazard: the
    factorization P(dead at v | progressed at u) = 1 - exp(-H12(u, v)) does
    not hold under clock-reset dynamics.
    """
    if u > v:
        raise ValueError("requires u <= v")
    _check_time(u)
    if not arm.is_markov:
        raise ValueError("joint_cdf requires a Markov (clock-forward) 1->2 hazard")
    h12 = arm.h12
    inner = h12.inner if isinstance(h12, EntryShiftedHazard) else h12
    p12 = 1.0 - math.exp(-cumulative_hazard(inner, u, v))
    return p01(arm, u) * p12 + (1.0 - s_os(arm, u))


def h_pfs(arm: ArmHazards, t: float) -> float:
    """Hazard of the progression-free survival endpoint: h01(t) + h02(t)."""
    _check_time(t)
    return float(hazard_at(arm.h01, t) + hazard_at(arm.h02, t))


def h_os(arm: ArmHazards, t):
    """Overall-survival hazard for constant transition hazards.

    With l012 = l12 - l01 - l02 nonzero:

        h_os(t) = ((l12 - l02) (l01 + l02) - l01 l12 exp(-l012 t))
                  / ((l12 - l02) - l01 exp(-l012 t))

    The denominator is l012 * S_os(t) * exp((l01 + l02) t), hence never zero.
    """
    _check_time(t)
    l01, l02, l12 = arm.constant_rates()
    d = arm.lambda012()
    t = np.asarray(t, dtype=float) if np.ndim(t) else t
    e = np.exp(-d * t)
    num = (l12 - l02) * (l01 + l02) - l01 * l12 * e
    den = (l12 - l02) - l01 * e
    return num / den


def hr_pfs(arm_a: ArmHazards, arm_b: ArmHazards) -> float:
    """Constant PFS hazard ratio (l01a + l02a) / (l01b + l02b)."""
    l01a, l02a, _ = arm_a.constant_rates()
    l01b, l02b, _ = arm_b.constant_rates()
    den = l01b + l02b
    if den <= 0.0:
        raise ValueError("denominator arm has zero PFS hazard")
    return (l01a + l02a) / den


def hr_os(arm_a: ArmHazards, arm_b: ArmHazards, t: float):
    """OS hazard ratio h_os_a(t) / h_os_b(t); None if the denominator vanishes."""
    num = h_os(arm_a, t)
    den = h_os(arm_b, t)
    if den == 0.0:
        return None
    return num / den


def average_hr_os(arm_a: ArmHazards, arm_b: ArmHazards, horizon: float) -> float:
    """Time-averaged OS hazard ratio over [0, horizon].

    Weighted average hazard ratio

        AHR = int (h_a / (h_a + h_b)) w(t) dt / int (h_b / (h_a + h_b)) w(t) dt

    with the square-root weight w(t) = -d/dt [S_a(t) S_b(t)]^(1/2), i.e.
    w = (1/2) (h_a + h_b) sqrt(S_a S_b), so the ratio reduces to

        AHR = int h_a sqrt(S_a S_b) dt / int h_b sqrt(S_a S_b) dt,

    evaluated by adaptive quadrature to relative tolerance 1e-8. The
    square-root exponent matters: the plain product weight concentrates all
    mass where deaths are frequent and gives visibly different averages.
    This weight choice is a calibration target, not ground truth.
    """
    if not (horizon > 0.0):
        raise ValueError("horizon must be positive")
    arm_a.lambda012()
    arm_b.lambda012()

    def w(t):
        sa = p00(arm_a, t) + _p01_constant(arm_a, t)
        sb = p00(arm_b, t) + _p01_constant(arm_b, t)
        return math.sqrt(sa * sb)

    num, _ = quad(lambda t: h_os(arm_a, t) * w(t), 0.0, horizon,
                  epsrel=_QUAD_RTOL, epsabs=0.0, limit=200)
    den, _ = quad(lambda t: h_os(arm_b, t) * w(t), 0.0, horizon,
                  epsrel=_QUAD_RTOL, epsabs=0.0, limit=200)
    return num / den
