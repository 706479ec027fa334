from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsguard.env import ConfigError, Label
from cpsguard.metrics import (
    ConfusionCounts,
    DetectionTracker,
    check_eps_delta,
    compute_metrics,
    compute_resilience,
    metrics_csv,
    parse_metrics_csv,
    rho_from_counts,
)
from cpsguard.rewards import (
    RewardConfig,
    attacker_reward,
    global_reward,
    local_reward,
    local_rewards,
)


def test_local_reward_table():
    assert local_reward(Label.TP) == 1.0
    assert local_reward(Label.FP) == -0.2
    assert local_reward(Label.FN) == -1.0
    assert local_reward(Label.TN) == 0.0
    assert local_reward(Label.NONE) == 0.0
    labs = np.array([Label.TP, Label.FP, Label.FN, Label.TN, Label.NONE])
    assert local_rewards(labs).tolist() == [1.0, -0.2, -1.0, 0.0, 0.0]


def test_global_reward_examples():
    assert global_reward(0, 0, 8) == pytest.approx(1.6, abs=1e-12)
    assert global_reward(2, 1, 7) == pytest.approx(-0.2 - 0.01 + 1.4, abs=1e-12)
    with pytest.raises(ValueError):
        global_reward(-1, 0, 0)
    with pytest.raises(ValueError):
        attacker_reward(-2)


def test_attacker_reward_scales_with_evasions():
    assert attacker_reward(0) == 0.0
    assert attacker_reward(3) == pytest.approx(0.3, abs=1e-15)


def test_cost_must_exceed_attacker_reward():
    with pytest.raises(ConfigError, match="defender_cost"):
        RewardConfig(attacker_evasion_reward=0.5, defender_cost=0.5).validate()
    RewardConfig().validate()


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 24), st.integers(0, 24), st.integers(0, 24))
def test_global_reward_closed_form(c, d, u):
    assert abs(global_reward(c, d, u) - (-0.1 * c - 0.01 * d + 0.2 * u)) <= 1e-12


def test_metrics_hand_computed():
    m = compute_metrics(ConfusionCounts(tp=3, fp=1, fn=1, tn=3), [1, 2, 3])
    assert m.precision == 0.75 and m.recall == 0.75 and m.f1 == 0.75
    assert m.accuracy == 0.75 and m.far == 0.25 and m.mttd == 2.0


def test_metric_edge_cases():
    m = compute_metrics(ConfusionCounts(tn=10))
    assert m.precision is None and m.recall is None and m.f1 == 0.0 and m.far == 0.0 and m.mttd is None
    m = compute_metrics(ConfusionCounts(tp=5))
    assert m.precision == 1.0 and m.recall == 1.0 and m.far is None
    with pytest.raises(ValueError):
        compute_metrics(ConfusionCounts(tp=-1))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_metrics_match_rationals(tp, fp, fn, tn):
    m = compute_metrics(ConfusionCounts(tp, fp, fn, tn))
    if tp + fp:
        assert m.precision == pytest.approx(float(Fraction(tp, tp + fp)), rel=1e-15)
    if fp + tn:
        assert m.far == pytest.approx(float(Fraction(fp, fp + tn)), rel=1e-15)
    if m.precision and m.recall:
        assert 0.0 <= m.f1 <= 1.0
        assert min(m.precision, m.recall) <= m.f1 + 1e-15 <= max(m.precision, m.recall) + 2e-15


def test_detection_delay_is_inclusive():
    tr = DetectionTracker(3)
    comp = np.array([True, False, False])
    tr.update(0, comp, np.array([Label.FN, Label.TN, Label.TN]), comp)
    tr.update(1, comp, np.array([Label.FN, Label.TN, Label.TN]), comp)
    tr.update(2, comp, np.array([Label.TP, Label.TN, Label.TN]), np.zeros(3, bool))
    assert tr.delays == [3]
    # caught on the step it began
    comp = np.array([False, True, False])
    tr.update(3, comp, np.array([Label.TN, Label.TP, Label.TN]), comp)
    tr.update(4, comp, np.array([Label.TN, Label.TP, Label.TN]), comp)
    assert tr.delays == [3, 1]


def test_resilience_example():
    trace = [set(), {0}, {0, 1}, {1}, set()]
    rep = compute_resilience(trace, horizon=5, n=2)
    assert rep.tau == [[2], [2]]
    assert list(rep.freq) == [0.4, 0.4]
    assert rep.rho == 0.4


def test_resilience_matrix_and_errors():
    m = np.array([[1, 0], [1, 0], [0, 0], [1, 1]], bool)
    rep = compute_resilience(m)
    assert rep.tau == [[2, 1], [1]]
    assert rep.rho == pytest.approx(rho_from_counts(m), abs=1e-15)
    with pytest.raises(ValueError, match="ragged"):
        compute_resilience([{0}, {3}], n=2)
    with pytest.raises(ValueError):
        compute_resilience(m, horizon=7)
    with pytest.raises(ValueError):
        compute_resilience([], n=2)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_rho_two_forms_agree(T_, n, seed):
    m = np.random.default_rng(seed).random((T_, n)) < 0.3
    assert abs(compute_resilience(m).rho - rho_from_counts(m)) <= 1e-12


def test_eps_delta_verdict():
    v = check_eps_delta([0.1, 0.2, 0.6, 0.05], eps=0.3, delta=0.25)
    assert v.fraction == 0.75 and v.passed
    assert not check_eps_delta([0.5, 0.6], eps=0.3, delta=0.1).passed
    with pytest.raises(ValueError):
        check_eps_delta([], 0.1, 0.1)


def test_metrics_csv_round_trip():
    m = compute_metrics(ConfusionCounts(3, 1, 1, 3), [2], [10.5])
    rows = [m.row(42, "hamarl"), compute_metrics(ConfusionCounts(tn=4)).row(100, "flat")]
    text = metrics_csv(rows)
    assert text.splitlines()[0] == "seed,mode,return,f1,precision,recall,far,mttd,accuracy"
    back = parse_metrics_csv(text)
    assert back[0]["seed"] == 42 and back[0]["f1"] == 0.75 and back[0]["return"] == 10.5
    assert back[1]["precision"] is None
    with pytest.raises(ValueError):
        parse_metrics_csv("a,b\n1,2\n")
