import numpy as np
import pytest

from cpsguard.baselines import (
    LOSS,
    RESIDUAL,
    RTT,
    SYN,
    calibrate_rules,
    make_flat_config,
    make_rule_config,
    make_single_config,
    rule_actions,
    rule_based_policy,
)
from cpsguard.config import Mode, RuleConfig, RunConfig
from cpsguard.env import ConfigError, EnvConfig, LocalAction
from cpsguard.trainer import Policies, evaluate

RULES = RuleConfig(syn_threshold=0.2, loss_threshold=0.1, tamper_threshold=0.1, rtt_threshold=0.4)


def test_quiet_observation_is_noop():
    assert rule_based_policy(np.zeros(17), RULES) is LocalAction.NOOP


@pytest.mark.parametrize("col", [SYN, LOSS, RESIDUAL, RTT])
def test_any_feature_above_threshold_fires(col):
    obs = np.zeros(17)
    obs[col] = 0.9
    assert rule_based_policy(obs, RULES) is LocalAction.ALERT
    q = RuleConfig(**{**RULES.__dict__, "action_on_trigger": "QUARANTINE"})
    assert rule_based_policy(obs, q) is LocalAction.QUARANTINE


def test_rule_is_pure_and_vectorised():
    rng = np.random.default_rng(0)
    obs = rng.random((50, 8, 17))
    a = rule_actions(obs, RULES)
    assert np.array_equal(a, rule_actions(obs.copy(), RULES))
    for i in range(5):
        for j in range(8):
            assert a[i, j] == rule_based_policy(obs[i, j], RULES)


def test_threshold_validation():
    with pytest.raises(ConfigError):
        RuleConfig(syn_threshold=-1.0).validate()
    with pytest.raises(ConfigError):
        RuleConfig(loss_threshold=float("nan")).validate()
    with pytest.raises(ConfigError):
        RuleConfig(action_on_trigger="PATCH").validate()


def test_calibration_is_deterministic_and_finite():
    env = EnvConfig(n_subsystems=4, episode_length=30)
    a, b = calibrate_rules(env, episodes=2), calibrate_rules(env, episodes=2)
    assert a == b
    for v in (a.syn_threshold, a.loss_threshold, a.tamper_threshold, a.rtt_threshold):
        assert np.isfinite(v) and v >= 0
    assert calibrate_rules(env, episodes=2, percentile=99).rtt_threshold >= a.rtt_threshold


def test_calibrated_rules_alarm_often_under_attack():
    # default plant and thresholds: a noisy but not useless detector
    cfg = RunConfig(mode=Mode.RULE, eval_episodes=4).validate()
    ev = evaluate(Policies(cfg, 42), 42, 4)
    assert 0.3 < ev.metrics.far < 0.7


def test_mode_shims():
    base = RunConfig()
    assert make_flat_config(base).mode is Mode.FLAT
    assert make_single_config(base).mode is Mode.SINGLE
    r = make_rule_config(base, RULES)
    assert r.mode is Mode.RULE and r.rules == RULES
    assert base.mode is Mode.HAMARL
