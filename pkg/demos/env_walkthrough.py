"""Step the simulator by hand and watch labels, rewards and compromise."""
import numpy as np

from cpsguard.env import AttackType, EnvConfig, JointAction, Label, LocalAction, compromise_set, reset, step
from cpsguard.rewards import RewardConfig, step_rewards

cfg = EnvConfig(p_lateral_success=1.0)
s = reset(cfg, seed=7)
rcfg = RewardConfig()
print("entry nodes", cfg.entry_nodes)

# the attacker scans node 1, then breaks in from outside
plan = [(AttackType.SCAN, 1), (AttackType.LATERAL, 1), (AttackType.SCAN, 0), (AttackType.LATERAL, 0)]
for t, (atk, tgt) in enumerate(plan):
    local = np.zeros(cfg.n_subsystems, dtype=np.int64)
    if t == 3:
        local[1] = LocalAction.PATCH  # defender 1 finally reacts
    src = -1 if tgt == 1 else 1
    s, out = step(s, JointAction(local, 0, -1, int(atk), tgt, src))
    rr = step_rewards(out, s.t - 1, rcfg)
    labels = [Label(x).name for x in out.labels]
    print(f"t={s.t} {atk.name:>7}->{tgt} comp={sorted(compromise_set(s))} labels={labels[:3]} R={rr.global_reward:.2f}")
