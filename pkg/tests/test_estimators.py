import math

import numpy as np
import pytest

from trialmsm.analytic import ArmHazards, p01, s_pfs
from trialmsm.estimators import (
    MsmRecord,
    StepFunction,
    Transition,
    aalen_johansen,
    derive_idm_records,
    fit_piecewise_exponential,
    kaplan_meier,
    nelson_aalen,
    paired_coordinates,
)
from trialmsm.hazards import ConstantHazard, PiecewiseHazard
from trialmsm.simulate import Arm, Scenario, simulate_trial

S1_CTL = ArmHazards.constant(0.10, 0.40, 0.30)


def _records_from_trial(records):
    rows = [(r.pfs_time, r.pfs_event, r.os_time, r.os_event) for r in records]
    return derive_idm_records(rows, [r.patient_id for r in records])


def control_records(n, seed=101, censoring=False):
    sc = Scenario(
        arms=(Arm("treatment", S1_CTL), Arm("control", S1_CTL)),
        censoring=ConstantHazard(0.05) if censoring else None,
    )
    return _records_from_trial(simulate_trial(sc, n, seed, 0))


def test_step_function_evaluation():
    f = StepFunction((1.0, 2.0), (0.5, 0.25), 1.0)
    assert f(0.5) == 1.0
    assert f(1.0) == 0.5  # right-continuous
    assert f(1.9) == 0.5
    np.testing.assert_allclose(f(np.array([0.0, 2.0, 3.0])), [1.0, 0.25, 0.25])


def test_derive_progression_then_death():
    (rec,) = derive_idm_records([(5.0, 1, 9.0, 1)])
    assert rec.transitions == (
        Transition(0, 1, 0.0, 5.0),
        Transition(1, 2, 5.0, 9.0),
    )


def test_derive_death_without_progression():
    (rec,) = derive_idm_records([(7.0, 1, 7.0, 1)])
    assert rec.transitions == (Transition(0, 2, 0.0, 7.0),)


def test_derive_censored_in_initial_state():
    (rec,) = derive_idm_records([(4.0, 0, 4.0, 0)])
    assert rec.transitions == (Transition(0, None, 0.0, 4.0),)


def test_derive_censored_after_progression():
    (rec,) = derive_idm_records([(3.0, 1, 8.0, 0)])
    assert rec.transitions == (
        Transition(0, 1, 0.0, 3.0),
        Transition(1, None, 3.0, 8.0),
    )


def test_derive_rejects_inconsistent_rows():
    with pytest.raises(ValueError, match="row 0"):
        derive_idm_records([(2.0, 0, 5.0, 1)])
    with pytest.raises(ValueError, match="row 1"):
        derive_idm_records([(2.0, 1, 5.0, 1), (3.0, 0, 3.0, 1)])
    with pytest.raises(ValueError, match="row 0"):
        derive_idm_records([(6.0, 1, 5.0, 1)])


def test_km_single_event():
    f = kaplan_meier([1.0, 3.0], [1, 0])
    assert f(1.0) == pytest.approx(0.5)
    assert f(0.99) == 1.0


def test_km_all_censored():
    f = kaplan_meier([1.0, 2.0, 3.0], [0, 0, 0])
    assert f(5.0) == 1.0


def test_km_uncensored_matches_empirical_survival():
    times = [2.0, 5.0, 1.0, 4.0, 3.0]
    f = kaplan_meier(times, [1] * 5)
    for t in np.linspace(0.0, 6.0, 25):
        emp = np.mean(np.asarray(times) > t)
        assert f(float(t)) == pytest.approx(emp, abs=1e-12)


def test_km_tie_convention_events_first():
    # censored subject at the event time stays in the risk set for the event
    f = kaplan_meier([2.0, 2.0], [1, 0])
    assert f(2.0) == pytest.approx(0.5)


def test_nelson_aalen_single_increment():
    recs = derive_idm_records([(3.0, 1, 9.0, 0), (5.0, 0, 5.0, 0)])
    na01 = nelson_aalen(recs, (0, 1))
    assert na01.times == (3.0,)
    assert na01(3.0) == pytest.approx(0.5)


def test_nelson_aalen_no_transitions():
    recs = derive_idm_records([(3.0, 0, 3.0, 0)])
    assert nelson_aalen(recs, (1, 2))(10.0) == 0.0


def test_nelson_aalen_left_truncation():
    # second patient enters state 1 at t=4, after the first's 1->2 event at 3;
    # the early event sees a risk set of one
    recs = derive_idm_records([(1.0, 1, 3.0, 1), (4.0, 1, 6.0, 1)])
    na12 = nelson_aalen(recs, (1, 2))
    assert na12(3.0) == pytest.approx(1.0)
    assert na12(6.0) == pytest.approx(2.0)


def test_nelson_aalen_risk_set_threshold():
    recs = derive_idm_records([(1.0, 1, 3.0, 1), (4.0, 1, 6.0, 1)])
    na12 = nelson_aalen(recs, (1, 2), risk_set_threshold=2)
    # both events happen with a single subject at risk; all suppressed
    assert na12(10.0) == 0.0


def test_nelson_aalen_converges_to_constant_hazard():
    recs = control_records(100_000)
    na02 = nelson_aalen(recs, (0, 2))
    grid = np.linspace(0.05, 3.0, 40)
    errs = [abs(na02(float(t)) - 0.40 * t) for t in grid]
    assert max(errs) < 0.01


def test_aalen_johansen_identity_without_transitions():
    recs = derive_idm_records([(3.0, 0, 3.0, 0)])
    np.testing.assert_allclose(aalen_johansen(recs, 0.0, 10.0), np.eye(3))


def test_aalen_johansen_rows_sum_to_one():
    recs = control_records(5000, censoring=True)
    for t in (0.5, 1.0, 2.0, 5.0):
        p = aalen_johansen(recs, 0.0, t)
        np.testing.assert_allclose(p.sum(axis=1), np.ones(3), atol=1e-12)
        assert np.all(p >= -1e-15) and np.all(p <= 1 + 1e-15)


def test_aalen_johansen_collapses_to_km_without_progressions():
    # no 0->1 transitions: P00 equals the OS Kaplan-Meier exactly
    rows = [(2.0, 1, 2.0, 1), (3.0, 0, 3.0, 0), (5.0, 1, 5.0, 1), (7.0, 0, 7.0, 0)]
    recs = derive_idm_records(rows)
    km = kaplan_meier([r[2] for r in rows], [r[3] for r in rows])
    for t in (1.0, 2.0, 4.0, 6.0, 8.0):
        assert aalen_johansen(recs, 0.0, t)[0, 0] == pytest.approx(km(t), abs=1e-15)


def test_aalen_johansen_p00_equals_pfs_km_exactly():
    trial = simulate_trial(
        Scenario(
            arms=(Arm("t", ArmHazards.constant(0.06, 0.3, 0.3)), Arm("c", S1_CTL)),
            censoring=ConstantHazard(0.1),
        ),
        4000,
        271,
        0,
    )
    recs = _records_from_trial(trial)
    km = kaplan_meier([r.pfs_time for r in trial], [r.pfs_event for r in trial])
    for t in np.linspace(0.1, 8.0, 30):
        assert aalen_johansen(recs, 0.0, float(t))[0, 0] == pytest.approx(
            km(float(t)), abs=1e-12
        )


def test_aalen_johansen_matches_analytic_p01():
    recs = control_records(100_000)
    assert aalen_johansen(recs, 0.0, 1.0)[0, 1] == pytest.approx(
        p01(S1_CTL, 1.0), abs=0.005
    )


def test_fit_piecewise_occurrence_exposure():
    # ten 1->2 events, hand-built exposure
    rows = [(1.0, 1, 11.0, 1)] * 10
    recs = derive_idm_records(rows)
    fit = fit_piecewise_exponential(recs, (1, 2), (0.0,))
    assert fit.rates[0] == pytest.approx(10 / 100.0)
    assert fit.events == (10,)
    assert fit.exposure[0] == pytest.approx(100.0)


def test_fit_piecewise_no_events():
    recs = derive_idm_records([(4.0, 0, 4.0, 0)])
    fit = fit_piecewise_exponential(recs, (0, 1), (0.0, 2.0))
    assert fit.rates == (0.0, 0.0)
    assert fit.zero_exposure == (False, False)  # at risk in both intervals
    # nobody ever occupies state 1: zero exposure everywhere, flagged
    fit12 = fit_piecewise_exponential(recs, (1, 2), (0.0, 2.0))
    assert fit12.rates == (0.0, 0.0)
    assert fit12.zero_exposure == (True, True)


def test_fit_piecewise_recovers_constant_rates():
    recs = control_records(50_000, seed=313, censoring=True)
    for transition, rate in (((0, 1), 0.10), ((0, 2), 0.40), ((1, 2), 0.30)):
        fit = fit_piecewise_exponential(recs, transition, (0.0, 0.7, 1.5))
        for r, d, ex in zip(fit.rates, fit.events, fit.exposure):
            se = math.sqrt(d) / ex
            assert abs(r - rate) < 3 * se


def test_fit_piecewise_recovers_piecewise_truth_and_reconstructs_pfs():
    # simulate from piecewise hazards, refit on the true break grid, and
    # compare the analytic PFS curve of the fit against the KM curve
    h01 = PiecewiseHazard((0.0, 1.0), (0.15, 0.05))
    h02 = PiecewiseHazard((0.0, 2.0), (0.35, 0.25))
    arm = ArmHazards(h01, h02, ConstantHazard(0.3))
    trial = simulate_trial(
        Scenario(arms=(Arm("a", arm), Arm("b", arm)), censoring=ConstantHazard(0.05)),
        10_000,
        317,
        0,
    )
    recs = _records_from_trial(trial)
    fit01 = fit_piecewise_exponential(recs, (0, 1), (0.0, 1.0))
    fit02 = fit_piecewise_exponential(recs, (0, 2), (0.0, 2.0))
    fitted = ArmHazards(
        PiecewiseHazard(fit01.breaks, fit01.rates),
        PiecewiseHazard(fit02.breaks, fit02.rates),
        ConstantHazard(0.3),
    )
    km = kaplan_meier([r.pfs_time for r in trial], [r.pfs_event for r in trial])
    sup = max(
        abs(s_pfs(fitted, float(t)) - km(float(t))) for t in np.linspace(0.1, 8.0, 80)
    )
    assert sup < 0.03


def test_estimator_consistency_loop():
    # derive(observe(simulate)) feeds Nelson-Aalen estimates that converge to
    # the generating hazards
    recs = control_records(100_000, seed=331, censoring=True)
    na01 = nelson_aalen(recs, (0, 1))
    na12 = nelson_aalen(recs, (1, 2))
    for t in (0.5, 1.5, 2.5):
        assert na01(t) == pytest.approx(0.10 * t, abs=0.01)
        # the 1->2 risk set is thinner; allow about three standard errors
        assert na12(t) == pytest.approx(0.30 * t, abs=0.04)


def test_paired_coordinates():
    a = StepFunction((1.0, 3.0), (0.1, 0.3), 0.0)
    b = StepFunction((2.0, 3.0), (0.2, 0.4), 0.0)
    times, va, vb = paired_coordinates(a, b)
    np.testing.assert_allclose(times, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(va, [0.1, 0.1, 0.3])
    np.testing.assert_allclose(vb, [0.0, 0.2, 0.4])
