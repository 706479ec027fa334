"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The learned-policy criteria (6, 7, 10) train at desk scale and take most of
the suite's runtime. Criterion 7 reuses the seed-42 HAMARL run from 6.
"""
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np

from conftest import ACCEPTANCE_LINES
from cpsguard.config import Mode, RunConfig, desk_scale
from cpsguard.env import JointAction, Label
from cpsguard.harness import bench_scaling, configure, eval_mixture
from cpsguard.metrics import ConfusionCounts, compute_metrics, compute_resilience, rho_from_counts
from cpsguard.rewards import global_reward, local_reward
from cpsguard.trainer import JointObservation, evaluate, gae, joint_log_prob, train

from oracles import fd_worst_error, gae_direct

SEEDS = (42, 100, 2025)
_RUNS: dict = {}


def record(num: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((num, bool(ok), detail))
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def trained(mode: str, seed: int):
    key = (mode, seed)
    if key not in _RUNS:
        _RUNS[key] = train(desk_scale(mode), seed)
    return _RUNS[key]


# 1 -------------------------------------------------------------------------------------
def test_criterion_1_gae_matches_direct_sum():
    rng = np.random.default_rng(1)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        r, v = rng.normal(size=n), rng.normal(size=n)
        boot = float(rng.normal())
        terminal = bool(rng.random() < 0.5)
        dones = np.zeros(n)
        dones[-1] = terminal
        adv, _ = gae(r, v, dones, boot, 0.99, 0.95)
        worst = max(worst, float(np.max(np.abs(adv - gae_direct(r, v, boot, 0.99, 0.95, terminal)))))
    took = time.perf_counter() - t0
    record(1, worst <= 1e-12 and took < 5.0, f"max |diff| {worst:.2e} over 1000 buffers in {took:.2f}s")


# 2 -------------------------------------------------------------------------------------
def test_criterion_2_finite_difference_gradients():
    t0 = time.perf_counter()
    worst = {k: max(fd_worst_error(k, seed) for seed in range(20))
             for k in ("LOCAL_GAT", "COORD_MLP", "ATTACKER_MLP")}
    took = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and took < 60.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(2, ok, f"max rel err {detail}; 20 cases each in {took:.1f}s")


# 3 -------------------------------------------------------------------------------------
def _probs(logits):
    z = np.exp(logits - logits.max())
    return z / z.sum()


def test_criterion_3_joint_policy_factorises():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        scale = float(rng.uniform(0.1, 3.0))
        local = [rng.normal(scale=scale, size=4) for _ in range(n)]
        coord, att_type, att_tgt = (rng.normal(scale=scale, size=4), rng.normal(scale=scale, size=4),
                                    rng.normal(scale=scale, size=n))
        ja = JointAction.make(rng.integers(0, 4, size=n), int(rng.integers(0, 4)), -1,
                              int(rng.integers(0, 4)), int(rng.integers(0, n)))
        pols = [(lambda o, lg=lg: lg) for lg in local]
        lp = joint_log_prob(pols, lambda o: coord, lambda o: (att_type, att_tgt),
                            JointObservation(local=[None] * n), ja)
        prod = np.prod([_probs(local[i])[ja.local[i]] for i in range(n)])
        prod *= _probs(coord)[ja.global_action] * _probs(att_type)[ja.attack] * _probs(att_tgt)[ja.attack_target]
        worst = max(worst, abs(np.exp(lp) - prod))
    record(3, worst <= 1e-12, f"max |exp(log p) - prod p| {worst:.2e} over 1000 draws")


# 4 -------------------------------------------------------------------------------------
def test_criterion_4_reward_exactness():
    table_ok = (local_reward(Label.TP), local_reward(Label.FP), local_reward(Label.FN)) == (1.0, -0.2, -1.0)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        c, d, u = (int(x) for x in rng.integers(0, 200, size=3))
        worst = max(worst, abs(global_reward(c, d, u) - (-0.1 * c - 0.01 * d + 0.2 * u)))
    record(4, table_ok and worst <= 1e-12, f"local table exact={table_ok}; max |R - closed form| {worst:.1e}")


# 5 -------------------------------------------------------------------------------------
def _fixtures(count=100):
    """Counts with power-of-two denominators so every expected metric is a float-exact rational."""
    rng = np.random.default_rng(5)
    out = []
    while len(out) < count:
        p = int(rng.integers(1, 9))
        q = p if rng.random() < 0.5 else int(rng.integers(p, 10))
        a, b = 2 ** p, 2 ** q  # tp+fp, tp+fn
        tp = int(rng.integers(1, a + 1))
        fp, fn = a - tp, b - tp
        tn = b - fp  # fp+tn = 2**q, total = 2**(q+1)
        k = int(rng.integers(0, 5))
        delays = [int(x) for x in rng.integers(1, 30, size=2 ** k)]
        out.append((ConfusionCounts(tp, fp, fn, tn), delays))
    return out


def test_criterion_5_metric_identities():
    bad = 0
    for counts, delays in _fixtures():
        tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
        want = {
            "precision": Fraction(tp, tp + fp),
            "recall": Fraction(tp, tp + fn),
            "f1": Fraction(2 * tp, 2 * tp + fp + fn),
            "accuracy": Fraction(tp + tn, tp + fp + fn + tn),
            "far": Fraction(fp, fp + tn),
            "mttd": Fraction(sum(delays), len(delays)),
        }
        m = compute_metrics(counts, delays)
        for name, exact in want.items():
            got = getattr(m, name)
            # the hand value must itself be float-exact when both denominators match
            if float(exact) != got or (name != "f1" and Fraction(got) != exact):
                bad += 1
        if tp + fp == tp + fn and Fraction(m.f1) != want["f1"]:
            bad += 1
    record(5, bad == 0, f"{bad} mismatches over 100 fixtures x 6 metrics")


# 6 -------------------------------------------------------------------------------------
def test_criterion_6_table_one_ordering():
    rows = {}
    for mode in ("hamarl", "flat", "rule-based"):
        for seed in SEEDS:
            m = trained(mode, seed).evaluation.metrics
            rows[(mode, seed)] = m
    f1 = {k: v.f1 for k, v in rows.items()}
    far = {k: v.far for k, v in rows.items()}
    ret = {k: v.mean_return for k, v in rows.items()}
    a = all(f1[(mode, s)] >= f1[("rule-based", s)] + 0.15 for mode in ("hamarl", "flat") for s in SEEDS)
    b = all(far[(mode, s)] < 0.20 for mode in ("hamarl", "flat") for s in SEEDS) and \
        all(far[("rule-based", s)] > 0.30 for s in SEEDS)
    # per seed, as the paper's table compares them
    c = all(abs(ret[("hamarl", s)] - ret[("flat", s)]) <= 0.15 * abs(ret[("flat", s)]) for s in SEEDS)
    rets = " ".join(f"{ret[('hamarl', s)]:.1f}/{ret[('flat', s)]:.1f}" for s in SEEDS)
    table = "; ".join(f"{m}: f1 " + "/".join(f"{f1[(m, s)]:.3f}" for s in SEEDS)
                      + " far " + "/".join(f"{far[(m, s)]:.3f}" for s in SEEDS)
                      for m in ("hamarl", "flat", "rule-based"))
    detail = f"(a) {a} (b) {b} (c) {c} [return hamarl/flat per seed {rets}]; {table}"
    record(6, a and b and c, detail)


# 7 -------------------------------------------------------------------------------------
def test_criterion_7_bounded_compromise():
    ev = trained("hamarl", 42).evaluation
    rhos = np.array(ev.rhos)
    form = max(abs(compute_resilience(ep.comp_trace).rho - rho_from_counts(ep.comp_trace)) for ep in ev.episodes)
    ok = len(rhos) == 20 and rhos.mean() < 0.5 and (rhos < 1.0).all() and form <= 1e-12
    record(7, ok, f"mean rho {rhos.mean():.3f}, max {rhos.max():.3f} over {len(rhos)} episodes; "
                  f"two forms differ by {form:.1e}")


# 8 -------------------------------------------------------------------------------------
def test_criterion_8_scaling_trend():
    counts = [4, 8, 12, 24]
    rows = bench_scaling(RunConfig(), counts, episodes=50)
    t = {(r["mode"], r["agents"]): r["seconds"] for r in rows}
    ham = [t[("hamarl", n)] for n in counts]
    flat = [t[("flat", n)] for n in counts]
    mono = all(b >= a for a, b in zip(ham, ham[1:]))
    ratio = ham[-1] / ham[0]
    flat_spread, ham_spread = max(flat) / min(flat), max(ham) / min(ham)
    ok = mono and 2.0 <= ratio <= 12.0 and flat_spread < ham_spread
    record(8, ok, "hamarl s " + "/".join(f"{x:.1f}" for x in ham) + " flat s "
                  + "/".join(f"{x:.1f}" for x in flat)
                  + f"; ratio 24/4 {ratio:.2f}; spread flat {flat_spread:.2f} < hamarl {ham_spread:.2f}")


# 9 -------------------------------------------------------------------------------------
def test_criterion_9_cli_determinism(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "cpsguard", "train", "--mode", "hamarl", "--seed", "42",
                               "--episodes", "20", "--out", str(out)],
                              capture_output=True, text=True, env=dict(os.environ))
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    a, b = outs
    same_csv = (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    cks = sorted(p.name for p in (a / "checkpoints").iterdir())
    same_ck = bool(cks) and all((a / "checkpoints" / c).read_bytes() == (b / "checkpoints" / c).read_bytes()
                                for c in cks)
    record(9, same_csv and same_ck, f"metrics.csv identical={same_csv}; {len(cks)} checkpoint(s) identical={same_ck}")


# 10 ------------------------------------------------------------------------------------
def test_criterion_10_zero_day_tamper():
    cfg = configure(desk_scale(), Mode.HAMARL, holdout="TAMPER")
    res = train(cfg, 42, evaluate_final=False)
    env, mixture = eval_mixture(cfg.env, "TAMPER")
    ev = evaluate(res.policies, 42, 20, env_cfg=env, mixture=mixture)
    tamper_steps = sum(int(ep.tamper_steps) for ep in ev.episodes)
    ok = "TAMPER" not in cfg.env.attack_types and "TAMPER" in env.attack_types and \
        tamper_steps > 0 and ev.metrics.recall >= 0.4 and ev.mean_rho < 0.8
    record(10, ok, f"recall {ev.metrics.recall:.3f}, mean rho {ev.mean_rho:.3f} over 20 episodes "
                   f"with {tamper_steps} tamper attempts")
