"""Static threshold IDS defender and the flat / single-agent configuration shims."""
from __future__ import annotations

import dataclasses

import numpy as np

from .config import Mode, RuleConfig, RunConfig
from .env import N_CHANNELS, EnvConfig, JointAction, LocalAction, reset, step
from .observe import observe_all

# column positions inside a 17-dim local observation
LOSS, RTT, SYN, RESIDUAL = N_CHANNELS + 0, N_CHANNELS + 1, N_CHANNELS + 2, N_CHANNELS + 3


def rule_based_policy(obs, rules: RuleConfig) -> LocalAction:
    """Fire ``action_on_trigger`` when any watched feature exceeds its threshold."""
    v = obs.vector() if hasattr(obs, "vector") else np.asarray(obs, dtype=np.float64)
    return LocalAction(int(rule_actions(v[None, :], rules)[0]))


def rule_actions(obs: np.ndarray, rules: RuleConfig) -> np.ndarray:
    """Vectorised rule over stacked observations (..., 17)."""
    trig = (
        (obs[..., SYN] > rules.syn_threshold)
        | (obs[..., LOSS] > rules.loss_threshold)
        | (obs[..., RESIDUAL] > rules.tamper_threshold)
        | (obs[..., RTT] > rules.rtt_threshold)
    )
    act = LocalAction[rules.action_on_trigger]
    return np.where(trig, int(act), int(LocalAction.NOOP)).astype(np.int64)


def calibrate_rules(env_cfg: EnvConfig, episodes: int = 4, seed: int = 0, percentile: float = 90.0,
                    action_on_trigger: str = "ALERT") -> RuleConfig:
    """Thresholds at the given percentile of each watched feature over attack-free runs."""
    clean = dataclasses.replace(env_cfg, attacker_enabled=False)
    feats = []
    noop = np.zeros(env_cfg.n_subsystems, dtype=np.int64)
    for ep in range(episodes):
        s = reset(clean, seed=int(np.random.SeedSequence([seed, 9_000_000 + ep]).generate_state(1)[0]))
        while not s.done:
            s, _ = step(s, JointAction(noop), inplace=True)
            feats.append(observe_all(s)[:, [LOSS, RTT, SYN, RESIDUAL]])
    f = np.concatenate(feats, axis=0)
    q = np.percentile(f, percentile, axis=0)
    return RuleConfig(
        syn_threshold=float(q[2]),
        loss_threshold=float(q[0]),
        tamper_threshold=float(q[3]),
        rtt_threshold=float(q[1]),
        action_on_trigger=action_on_trigger,
    ).validate()


def make_flat_config(base: RunConfig) -> RunConfig:
    """Same run with the coordinator replaced by a constant NOOP."""
    return dataclasses.replace(base, mode=Mode.FLAT)


def make_single_config(base: RunConfig) -> RunConfig:
    return dataclasses.replace(base, mode=Mode.SINGLE)


def make_rule_config(base: RunConfig, rules: RuleConfig | None = None) -> RunConfig:
    return dataclasses.replace(base, mode=Mode.RULE, rules=rules if rules is not None else base.rules)
