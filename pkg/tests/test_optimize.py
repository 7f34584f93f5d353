"""Risk minimization: the DP certificate against the exhaustive scan, the
tie-break order, parallel block scans, and the fast-path eligibility rules."""

import math

import numpy as np
import pytest

import resilkit as rk
from conftest import (
    M1_ACCEPTABLE,
    build_m1,
    random_acceptable,
    random_model,
)

A = M1_ACCEPTABLE

EFFORT = rk.Composed(rk.ControlEffort(), rk.Expectation())


def sure_viability():
    return rk.StochasticViability(A, 1.0)


def test_reservoir_minimum_effort(m1):
    out = rk.minimize_risk(m1, 2, 0, sure_viability(), EFFORT)
    assert out.resilient
    assert out.certificate == "dp"
    assert out.value == 2.0
    assert out.examined == 0
    # the reported value is the evaluated risk of the reported strategy
    bundle = rk.build_bundle(m1, out.strategy, 2)
    assert rk.evaluate_risk(m1, EFFORT, bundle) == 2.0


def test_reservoir_exhaustive_agrees(m1):
    dp = rk.minimize_risk(m1, 2, 0, sure_viability(), EFFORT)
    ex = rk.minimize_risk(m1, 2, 0, sure_viability(), EFFORT, method="exhaustive")
    assert ex.certificate == "exhaustive"
    assert ex.value == dp.value == 2.0
    assert ex.examined == 512
    # the forced pushes at state 2 make the least minimizer unique here
    assert rk.strategies_equal(dp.strategy, ex.strategy)


def test_not_resilient_is_an_answer(m1):
    for method in ("auto", "exhaustive"):
        out = rk.minimize_risk(m1, 0, 0, rk.Viability(A), EFFORT, method=method)
        assert not out.resilient
        assert out.value == math.inf
        assert out.strategy is None


def test_dp_certificate_skips_the_cap(m1):
    # no enumeration happens on the DP path, so the cap cannot trip
    out = rk.minimize_risk(m1, 2, 0, rk.Viability(A), EFFORT, cap=1)
    assert out.certificate == "dp"
    with pytest.raises(rk.CapacityError, match="exceed cap"):
        rk.minimize_risk(m1, 2, 0, rk.Viability(A), EFFORT,
                         method="exhaustive", cap=1)


def test_dp_eligibility_gates(m1):
    dp = dict(method="dp")
    with pytest.raises(rk.ConfigurationError, match="Markov class"):
        rk.minimize_risk(m1, 2, 0, rk.Viability(A), EFFORT,
                         strategy_class=rk.ADAPTED, **dp)
    with pytest.raises(rk.ConfigurationError, match="expected composed cost"):
        rk.minimize_risk(m1, 2, 0, rk.Viability(A),
                         rk.Composed(rk.ControlEffort(), rk.WorstCase()), **dp)
    with pytest.raises(rk.ConfigurationError, match="additive"):
        rk.minimize_risk(m1, 2, 0, rk.Viability(A),
                         rk.Composed(rk.RecoveryOffset(A), rk.Expectation()), **dp)
    with pytest.raises(rk.ConfigurationError, match="probability vectors"):
        rk.minimize_risk(build_m1(probs=None), 2, 0, rk.Viability(A), EFFORT, **dp)
    with pytest.raises(rk.ConfigurationError, match="surely-viable"):
        rk.minimize_risk(m1, 2, 0, rk.Bounded(A), EFFORT, **dp)
    with pytest.raises(rk.ConfigurationError, match="surely-viable"):
        rk.minimize_risk(m1, 2, 0, rk.StochasticViability(A, 0.5), EFFORT, **dp)
    with pytest.raises(rk.ConfigurationError, match="positive probability"):
        rk.minimize_risk(build_m1(probs=(1.0, 0.0)), 2, 0,
                         rk.StochasticViability(A, 1.0), EFFORT, **dp)


def test_auto_falls_back_to_exhaustive(m1):
    out = rk.minimize_risk(m1, 2, 0, rk.Bounded(A), EFFORT)
    assert out.certificate == "exhaustive"
    assert out.value == 2.0


def test_input_validation(m1):
    with pytest.raises(rk.InputError, match="x0"):
        rk.minimize_risk(m1, 7, 0, rk.Viability(A), EFFORT)
    with pytest.raises(rk.InputError, match="unknown method"):
        rk.minimize_risk(m1, 2, 0, rk.Viability(A), EFFORT, method="greedy")


def test_parallel_scan_matches_serial(m1):
    regime = sure_viability()
    one = rk.minimize_risk(m1, 2, 0, regime, EFFORT, method="exhaustive", jobs=1)
    four = rk.minimize_risk(m1, 2, 0, regime, EFFORT, method="exhaustive", jobs=4)
    assert one.value == four.value
    assert one.examined == four.examined == 512
    assert rk.strategies_equal(one.strategy, four.strategy)


def test_parallel_scan_matches_serial_randomized():
    rng = np.random.default_rng(555)
    for _ in range(8):
        model = random_model(rng, max_states=3, max_controls=2, max_horizon=2)
        acc = random_acceptable(rng, model)
        regime = rk.Bounded(acc)
        risk = rk.Composed(rk.TimeOutside(acc, cemetery_penalty=5.0), rk.WorstCase())
        x0 = int(rng.integers(model.n_states))
        one = rk.minimize_risk(model, x0, 0, regime, risk, jobs=1)
        three = rk.minimize_risk(model, x0, 0, regime, risk, jobs=3)
        assert one.resilient == three.resilient
        assert one.value == three.value
        assert one.examined == three.examined
        if one.resilient:
            assert rk.strategies_equal(one.strategy, three.strategy)


def test_tie_break_keeps_the_least_rank(m1):
    flat = rk.Composed(rk.TimeOutside({0, 1, 2, 3}), rk.Expectation())
    out = rk.minimize_risk(m1, 2, 0, rk.Viability(A), flat, method="exhaustive")
    assert out.value == 0.0
    value, strat, _ = rk.oracle_min_risk(m1, 2, 0, rk.Viability(A), flat)
    assert value == 0.0
    assert rk.strategies_equal(out.strategy, strat)
    first = rk.oracle_resilient_states(m1, 0, rk.Viability(A)).witnesses[2]
    assert rk.strategies_equal(out.strategy, first)


def test_dp_matches_exhaustive_randomized():
    rng = np.random.default_rng(4242)
    costs = 0
    for _ in range(25):
        model = random_model(
            rng, max_states=3, max_controls=2, max_w=2, max_horizon=2,
            with_probs=True,
        )
        acc = random_acceptable(rng, model)
        kind = costs % 4
        costs += 1
        if kind == 0:
            cost = rk.TimeOutside(acc, cemetery_penalty=9.0)
        elif kind == 1:
            cost = rk.ControlEffort(
                rates=tuple(float(r) for r in rng.integers(0, 4, model.n_controls))
            )
        elif kind == 2:
            cost = rk.TerminalMiss(acc, cemetery_penalty=9.0)
        else:
            cost = rk.TabularCost(
                rng.integers(0, 5, (model.horizon + 1, model.n_states)).astype(float),
                rng.integers(0, 5, (model.horizon, model.n_controls)).astype(float),
                cemetery_penalty=9.0,
            )
        risk = rk.Composed(cost, rk.Expectation())
        regime = rk.Viability(acc)
        x0 = int(rng.integers(model.n_states))
        dp = rk.minimize_risk(model, x0, 0, regime, risk, method="dp")
        ex = rk.minimize_risk(model, x0, 0, regime, risk, method="exhaustive")
        assert dp.resilient == ex.resilient
        if dp.resilient:
            assert dp.value == pytest.approx(ex.value, abs=1e-12)
            for out in (dp, ex):
                bundle = rk.build_bundle(model, out.strategy, x0)
                assert rk.evaluate_risk(model, risk, bundle) == pytest.approx(
                    out.value, abs=1e-12
                )


def correlated_noise_model():
    # the state carries no information, but the two noise draws are fully
    # correlated, so a prefix-reading policy can cancel the second one
    return rk.make_model(
        horizon=2,
        state_labels=("0", "1"),
        control_labels=("0", "1"),
        uncertainty_sets=("0", "1"),
        dynamics_fn=lambda t, x, u, w: 0 if t == 0 else (u + w) % 2,
        probs=(0.5, 0.5),
        scenario_probs={(0, 0): 0.5, (1, 1): 0.5},
    )


def test_adapted_class_beats_markov_under_correlation():
    model = correlated_noise_model()
    regime = rk.Bounded({0, 1})
    risk = rk.Composed(rk.TimeOutside({0}), rk.Expectation())
    markov = rk.minimize_risk(model, 0, 0, regime, risk)
    adapted = rk.minimize_risk(model, 0, 0, regime, risk,
                               strategy_class=rk.ADAPTED)
    assert markov.certificate == "exhaustive"
    assert markov.value == 0.5
    assert adapted.value == 0.0
    assert adapted.strategy_class == rk.ADAPTED
    # oracle agreement for the adapted class
    value, strat, _ = rk.oracle_min_risk(
        model, 0, 0, regime, risk, strategy_class=rk.ADAPTED
    )
    assert value == 0.0
    assert rk.strategies_equal(adapted.strategy, strat)


def test_indicator_reports_the_minimized_value(m1):
    assert rk.resilience_indicator(m1, 2, sure_viability(), EFFORT) == 2.0
    assert rk.resilience_indicator(m1, 0, rk.Viability(A), EFFORT) == math.inf
