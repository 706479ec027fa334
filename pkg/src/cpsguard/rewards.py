"""Reward functions for local defenders, the coordinator and the attacker."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ConfigError, Label


@dataclass(frozen=True)
class RewardConfig:
    tp_reward: float = 1.0
    fp_penalty: float = -0.2
    miss_penalty: float = -1.0
    comp_weight: float = 0.1
    downtime_weight: float = 0.01
    uptime_weight: float = 0.2
    attacker_evasion_reward: float = 0.1  # r_a
    defender_cost: float = 0.5  # c
    global_share: float = 0.1  # weight of R mixed into each local defender's training signal

    def validate(self) -> "RewardConfig":
        if not self.attacker_evasion_reward > 0:
            raise ConfigError("attacker_evasion_reward: r_a must be > 0")
        if not self.defender_cost > self.attacker_evasion_reward:
            raise ConfigError("defender_cost: c must exceed r_a")
        return self

    def lookup(self) -> np.ndarray:
        """Reward per :class:`Label` code."""
        table = np.zeros(len(Label))
        table[Label.TP] = self.tp_reward
        table[Label.FP] = self.fp_penalty
        table[Label.FN] = self.miss_penalty
        return table


DEFAULT = RewardConfig()


@dataclass(frozen=True)
class RewardRecord:
    local: np.ndarray
    global_reward: float
    attacker: float
    t: int


def local_reward(label, cfg: RewardConfig = DEFAULT) -> float:
    lab = Label(int(label))
    if lab is Label.TP:
        return cfg.tp_reward
    if lab is Label.FP:
        return cfg.fp_penalty
    if lab is Label.FN:
        return cfg.miss_penalty
    return 0.0


def local_rewards(labels: np.ndarray, cfg: RewardConfig = DEFAULT) -> np.ndarray:
    return cfg.lookup()[np.asarray(labels, dtype=np.int64)]


def global_reward(comp_count, downtime, uptime, cfg: RewardConfig = DEFAULT):
    """R = -0.1 |Comp(t)| - 0.01 downtime + 0.2 uptime, with per-step subsystem counts."""
    if np.any(np.asarray(comp_count) < 0) or np.any(np.asarray(downtime) < 0) \
            or np.any(np.asarray(uptime) < 0):
        raise ValueError("counts must be non-negative")
    return -cfg.comp_weight * comp_count - cfg.downtime_weight * downtime + cfg.uptime_weight * uptime


def attacker_reward(evasion_count, cfg: RewardConfig = DEFAULT):
    if np.any(np.asarray(evasion_count) < 0):
        raise ValueError("evasion_count must be non-negative")
    return cfg.attacker_evasion_reward * evasion_count


def step_rewards(outcome, t: int, cfg: RewardConfig = DEFAULT) -> RewardRecord:
    return RewardRecord(
        local=local_rewards(outcome.labels, cfg),
        global_reward=float(global_reward(outcome.comp_count, outcome.downtime_now,
                                          outcome.uptime_now, cfg)),
        attacker=float(attacker_reward(outcome.attacker_evasion_count, cfg)),
        t=t,
    )
