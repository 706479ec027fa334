"""Watch HAMARL defenders learn for a few minutes, then compare with the rule-based IDS.

Uses the desk-scale preset on the default 8-subsystem plant but stops at 256
episodes; the full 500 episodes take about six minutes on one core.
"""
from cpsguard.config import Mode, desk_scale
from cpsguard.trainer import train


def show(st):
    print(f"batch {st.batch:2d} ep {st.episodes:3d}  return {st.defender_return:7.1f}  "
          f"f1 {st.f1:.3f}  far {st.far:.3f}  rho {st.rho:.3f}")


res = train(desk_scale(Mode.HAMARL, episodes=256), seed=42, progress=show)
rule = train(desk_scale(Mode.RULE, episodes=32), seed=42)
for name, r in (("hamarl", res), ("rule-based", rule)):
    m = r.evaluation.metrics
    print(f"{name:>10} eval: f1 {m.f1:.3f} far {m.far:.3f} return {m.mean_return:7.1f} rho {r.evaluation.mean_rho:.3f}")
