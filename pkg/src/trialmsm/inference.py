"""Hypothesis testing and design mathematics.

Contains the two-sample log-rank statistic, the Schoenfeld required-event
formula, O'Brien-Fleming-type alpha spending, and two-analysis boundary
computation via bivariate-normal integration. Normal CDF and quantile are
delegated to scipy.special (ndtr / ndtri), which are accurate well beyond
the 1e-12 absolute target the tests enforce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

__all__ = [
    "norm_cdf",
    "norm_ppf",
    "logrank_z",
    "schoenfeld_events",
    "obf_spending",
    "bvn_lower",
    "gs_boundaries",
    "Analysis",
    "EndpointPlan",
    "GSDesign",
]


def norm_cdf(x):
    return ndtr(x) if np.ndim(x) else float(ndtr(x))


def norm_ppf(p):
    return ndtri(p) if np.ndim(p) else float(ndtri(p))


def logrank_z(times_a, events_a, times_b, events_b):
    """Standardized two-sample log-rank statistic (O - E) / sqrt(V) for group A.

    Negative values favor group A (fewer events than expected under the
    null); a two-sided level-alpha test rejects when |z| exceeds the
    critical value. Ties are handled with the hypergeometric variance.
    Returns None when the variance is zero (no comparable risk sets).
    """
    ta = np.asarray(times_a, dtype=float)
    ea = np.asarray(events_a, dtype=bool)
    tb = np.asarray(times_b, dtype=float)
    eb = np.asarray(events_b, dtype=bool)
    if ea.sum() + eb.sum() == 0:
        raise ValueError("log-rank needs at least one event")

    ta_sorted = np.sort(ta)
    tb_sorted = np.sort(tb)
    ev_times = np.concatenate([ta[ea], tb[eb]])
    ut = np.unique(ev_times)

    na, nb = len(ta), len(tb)
    ya = na - np.searchsorted(ta_sorted, ut, side="left")
    yb = nb - np.searchsorted(tb_sorted, ut, side="left")
    y = ya + yb

    ea_sorted = np.sort(ta[ea])
    eb_sorted = np.sort(tb[eb])
    da = np.searchsorted(ea_sorted, ut, side="right") - np.searchsorted(ea_sorted, ut, side="left")
    db = np.searchsorted(eb_sorted, ut, side="right") - np.searchsorted(eb_sorted, ut, side="left")
    d = da + db

    with np.errstate(invalid="ignore", divide="ignore"):
        frac_a = np.where(y > 0, ya / y, 0.0)
        e_a = d * frac_a
        v = np.where(y > 1, d * frac_a * (1.0 - frac_a) * (y - d) / np.maximum(y - 1, 1), 0.0)
    observed = float(da.sum())
    expected = float(e_a.sum())
    variance = float(v.sum())
    if variance <= 0.0:
        return None
    return (observed - expected) / math.sqrt(variance)


def schoenfeld_events(hr: float, alpha: float, power: float, allocation_ratio: float = 1.0) -> int:
    """Required total event count for a two-sided log-rank test under PH.

    ceil((z_{1-alpha/2} + z_power)^2 * (1 + r)^2 / r / log(hr)^2); the total
    event form, so r = 1 gives the familiar factor 4.
    """
    if hr <= 0.0 or hr == 1.0:
        raise ValueError("hazard ratio must be positive and different from 1")
    if not (0.0 < alpha < 1.0 and 0.0 < power < 1.0):
        raise ValueError("alpha and power must lie in (0, 1)")
    if allocation_ratio <= 0.0:
        raise ValueError("allocation ratio must be positive")
    r = allocation_ratio
    drift = norm_ppf(1.0 - alpha / 2.0) + norm_ppf(power)
    return math.ceil(drift**2 * (1.0 + r) ** 2 / r / math.log(hr) ** 2)


def obf_spending(alpha: float, information_fraction: float) -> float:
    """Lan-DeMets cumulative alpha spend approximating O'Brien-Fleming.

    a(t) = 2 (1 - Phi(z_{1-alpha/2} / sqrt(t))) for one-sided level alpha;
    a(1) = alpha exactly.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    t = information_fraction
    if not (0.0 < t <= 1.0):
        raise ValueError("information fraction must lie in (0, 1]")
    if t == 1.0:
        return alpha
    return 2.0 * (1.0 - norm_cdf(norm_ppf(1.0 - alpha / 2.0) / math.sqrt(t)))


def bvn_lower(h: float, k: float, rho: float) -> float:
    """P(Z1 < h, Z2 < k) for standard bivariate normal with correlation rho.

    Reduces to a one-dimensional integral of phi(x) Phi((k - rho x) /
    sqrt(1 - rho^2)) over (-inf, h], evaluated with deterministic adaptive
    quadrature (absolute tolerance well below 1e-8).
    """
    if not (-1.0 <= rho <= 1.0):
        raise ValueError("correlation must lie in [-1, 1]")
    if math.isinf(h) and h > 0:
        return norm_cdf(k)
    if math.isinf(k) and k > 0:
        return norm_cdf(h)
    if rho == 1.0:
        return norm_cdf(min(h, k))
    if rho == -1.0:
        return max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0)
    s = math.sqrt(1.0 - rho * rho)

    def integrand(x):
        return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi) * ndtr((k - rho * x) / s)

    val, _ = quad(integrand, -np.inf, h, epsabs=1e-12, epsrel=1e-11, limit=200)
    return float(val)


def _two_sided_band_exceedance(c1: float, c2: float, rho: float) -> float:
    """P(|Z1| < c1, Z2 >= c2) under correlation rho."""
    inside = norm_cdf(c1) - norm_cdf(-c1)
    below = bvn_lower(c1, c2, rho) - bvn_lower(-c1, c2, rho)
    return inside - below


def gs_boundaries(alpha: float, information_fractions) -> tuple[float, ...]:
    """Two-sided critical values for a one-interim O'Brien-Fleming design.

    For fractions (t1, 1): the interim boundary spends the per-side
    O'Brien-Fleming budget a(t1), and the final boundary solves

        P(|Z1| < c1, |Z2| >= c2) = alpha - 2 a(t1)

    under the bivariate normal with correlation sqrt(t1), doubling the
    one-sided crossing probability (joint opposite-sign crossings are
    negligible at these levels). A single fraction (1,) degenerates to the
    fixed-design critical value.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    fractions = tuple(float(t) for t in information_fractions)
    if len(fractions) == 1:
        if fractions[0] != 1.0:
            raise ValueError("a single analysis must sit at information fraction 1")
        return (norm_ppf(1.0 - alpha / 2.0),)
    if len(fractions) != 2 or fractions[1] != 1.0:
        raise ValueError("supported schedules: (1,) or (t1, 1)")
    t1 = fractions[0]
    if not (0.0 < t1 < 1.0):
        raise ValueError("interim fraction must lie in (0, 1)")

    a1 = obf_spending(alpha / 2.0, t1)  # one-sided cumulative spend at the interim
    c1 = norm_ppf(1.0 - a1)
    remaining = alpha / 2.0 - a1
    if remaining <= 0.0:
        raise ValueError("no alpha left for the final analysis")
    rho = math.sqrt(t1)

    def objective(c2):
        return _two_sided_band_exceedance(c1, c2, rho) - remaining

    # the root sits just above z_{1-alpha/2}; for extreme interim fractions
    # (t1 close to 1) it can marginally exceed c1, so bracket past it
    lo, hi = 0.0, c1 + 1.0
    if objective(lo) <= 0.0 or objective(hi) >= 0.0:
        raise ValueError("no final boundary in bracket; alpha split is pathological")
    c2 = brentq(objective, lo, hi, xtol=1e-6)
    return (float(c1), float(c2))


@dataclass(frozen=True)
class Analysis:
    """One scheduled analysis of an endpoint."""

    event_target: int
    critical_value: float
    cumulative_alpha: float

    def __post_init__(self):
        if self.event_target < 1:
            raise ValueError("event target must be >= 1")
        if self.critical_value <= 0.0:
            raise ValueError("critical value must be positive")
        if not (0.0 < self.cumulative_alpha < 1.0):
            raise ValueError("cumulative alpha must lie in (0, 1)")


@dataclass(frozen=True)
class EndpointPlan:
    """Analysis schedule of one endpoint with its allotted two-sided alpha."""

    alpha: float
    analyses: tuple[Analysis, ...]
    spending: str = "obrien-fleming"

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("endpoint alpha must lie in (0, 1)")
        if not self.analyses:
            raise ValueError("an endpoint needs at least one analysis")
        targets = [a.event_target for a in self.analyses]
        if any(x >= y for x, y in zip(targets, targets[1:])):
            raise ValueError("event targets must be strictly increasing")
        alphas = [a.cumulative_alpha for a in self.analyses]
        if any(x > y for x, y in zip(alphas, alphas[1:])):
            raise ValueError("cumulative alpha must be nondecreasing")
        if abs(alphas[-1] - self.alpha) > 1e-9:
            raise ValueError("cumulative alpha must end at the endpoint alpha")
        crits = [a.critical_value for a in self.analyses]
        if any(x < y for x, y in zip(crits, crits[1:])):
            raise ValueError("critical values must be nonincreasing across analyses")

    @property
    def final(self) -> Analysis:
        return self.analyses[-1]


def single_stage_plan(alpha: float, event_target: int) -> EndpointPlan:
    """Fixed design: one analysis at the event target with z_{1-alpha/2}."""
    return EndpointPlan(
        alpha=alpha,
        analyses=(Analysis(event_target, norm_ppf(1.0 - alpha / 2.0), alpha),),
        spending="fixed",
    )


def two_stage_plan(alpha: float, interim_target: int, final_target: int) -> EndpointPlan:
    """One interim plus final, O'Brien-Fleming spending at the planned fraction."""
    t1 = interim_target / final_target
    c1, c2 = gs_boundaries(alpha, (t1, 1.0))
    interim_alpha = 2.0 * obf_spending(alpha / 2.0, t1)
    return EndpointPlan(
        alpha=alpha,
        analyses=(
            Analysis(interim_target, c1, interim_alpha),
            Analysis(final_target, c2, alpha),
        ),
    )


@dataclass(frozen=True)
class GSDesign:
    """Per-endpoint analysis schedules plus the global significance split.

    When the OS plan carries an interim, its simulated timing is the
    calendar time of the PFS final data cut (the planned interim event
    count only enters through the boundary computation).
    """

    pfs: EndpointPlan
    os: EndpointPlan
    global_alpha: float

    def __post_init__(self):
        if not (0.0 < self.global_alpha < 1.0):
            raise ValueError("global alpha must lie in (0, 1)")
        if len(self.pfs.analyses) != 1:
            raise ValueError("the PFS endpoint has a single analysis")
        if len(self.os.analyses) > 2:
            raise ValueError("at most one OS interim is supported")

    @property
    def plans(self) -> dict[str, EndpointPlan]:
        return {"pfs": self.pfs, "os": self.os}
