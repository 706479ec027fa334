"""GAE, the PPO clipped objective, and the defender/coordinator/attacker training loop.

Rollouts run a batch of episodes in lockstep: one batched network pass per step
serves every live episode, while each episode keeps its own environment
generator and its own action generator, both derived from ``(seed, episode
index)``. Results therefore do not depend on how episodes are grouped.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import checkpoint as ckpt
from .autodiff import tensor as T
from .autodiff.nets import NetKind, log_softmax_np
from .baselines import calibrate_rules, rule_actions
from .config import GAEConfig, Mode, PPOConfig, RuleConfig, RunConfig, run_config_from_text, run_config_to_text
from .env import AttackType, ConfigError, EnvConfig, GlobalAction, JointAction, reset, step
from .metrics import ConfusionCounts, DetectionTracker, MetricsReport, compute_metrics, compute_resilience
from .observe import build_ego_graphs, coordinator_input, observe_all, observe_attacker
from .rewards import step_rewards


class TrainingError(RuntimeError):
    """Non-finite loss or another condition that aborts an update."""


# ---------------------------------------------------------------------------
# GAE
# ---------------------------------------------------------------------------
@dataclass
class TrajectoryBuffer:
    """One episode of one role. Trailing axes (e.g. agents) are carried through.

    ``dones[t]`` marks that ``s_{t+1}`` is terminal, so nothing is bootstrapped
    past it; ``bootstrap`` is V(s_T) for an episode cut off by the horizon.
    """

    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    bootstrap: np.ndarray | float = 0.0
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def append(self, obs, action, log_prob, reward, value, done: bool) -> None:
        self.observations.append(obs)
        self.actions.append(action)
        self.log_probs.append(log_prob)
        self.rewards.append(reward)
        self.values.append(value)
        self.dones.append(bool(done))
        self.advantages = self.returns = None

    def __len__(self) -> int:
        return len(self.rewards)


def gae(rewards, values, dones, bootstrap, gamma: float, lam: float):
    """Backward recursion A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1}."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape[0] == 0:
        raise ValueError("empty buffer")
    if v.shape != r.shape:
        raise ValueError(f"rewards {r.shape} and values {v.shape} differ in shape")
    d = np.asarray(dones, dtype=np.float64).reshape((-1,) + (1,) * (r.ndim - 1))
    nxt = np.concatenate([v[1:], np.broadcast_to(np.asarray(bootstrap, dtype=np.float64), v[:1].shape)])
    delta = r + gamma * nxt * (1.0 - d) - v
    adv = np.zeros_like(r)
    acc = np.zeros_like(r[0])
    for t in range(r.shape[0] - 1, -1, -1):
        acc = delta[t] + gamma * lam * (1.0 - d[t]) * acc
        adv[t] = acc
    return adv, adv + v


def compute_gae(buffer: TrajectoryBuffer, cfg: GAEConfig) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns-to-go for one episode buffer; also stored on it."""
    if len(buffer) == 0:
        raise ValueError("empty buffer")
    adv, ret = gae(buffer.rewards, buffer.values, buffer.dones, buffer.bootstrap, cfg.gamma, cfg.lam)
    buffer.advantages, buffer.returns = adv, ret
    return adv, ret


def normalize_advantages(adv: np.ndarray, axis=None) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    mu = adv.mean(axis=axis, keepdims=True)
    sd = adv.std(axis=axis, keepdims=True)
    n = adv.size if axis is None else adv.shape[axis]
    if n <= 1:
        return adv - mu
    return (adv - mu) / np.maximum(sd, 1e-8)


# ---------------------------------------------------------------------------
# PPO objective
# ---------------------------------------------------------------------------
def ppo_surrogate(ratio, advantage, clip_eps: float):
    """min(rho*A, clip(rho, 1-eps, 1+eps)*A), elementwise on arrays or tensors."""
    if not clip_eps > 0:
        raise ValueError("clip_eps must be > 0")
    if isinstance(ratio, T.Tensor):
        return T.minimum(ratio * advantage, T.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage)
    ratio = np.asarray(ratio, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage)


def _head(logits: T.Tensor, actions: np.ndarray, mask=None) -> tuple[T.Tensor, T.Tensor]:
    """Log-prob of the taken actions and the entropy of one categorical head."""
    if mask is not None:
        mask = np.broadcast_to(mask, logits.shape)
    logp_all = T.log_softmax(logits, mask)
    logp = T.gather_last(logp_all, actions)
    ent = -T.tsum(T.exp(logp_all) * logp_all, axis=-1)
    return logp, ent


def ppo_loss(logp: T.Tensor, entropy: T.Tensor, value: T.Tensor, old_logp, adv, ret,
             cfg: PPOConfig) -> tuple[T.Tensor, dict]:
    """Clipped PPO loss averaged over the last (batch) axis and summed over any agent axis.

    Minimising it maximises surrogate - value_coef*MSE + entropy_coef*entropy.
    """
    ratio = T.exp(logp - old_logp)
    surr = ppo_surrogate(ratio, adv, cfg.clip_eps)
    verr = T.square(value - ret)
    n = logp.shape[-1]
    pol = -T.tsum(surr) * (1.0 / n)
    vl = T.tsum(verr) * (1.0 / n)
    ent = T.tsum(entropy) * (1.0 / n)
    loss = pol + cfg.value_coef * vl - cfg.entropy_coef * ent
    r = ratio.data
    stats = {
        "policy_loss": pol.item(),
        "value_loss": vl.item(),
        "entropy": ent.item(),
        "clip_frac": float(np.mean(np.abs(r - 1.0) > cfg.clip_eps)),
        "approx_kl": float(np.mean((r - 1.0) - np.log(r))),
    }
    if not np.isfinite(loss.data).all():
        raise TrainingError("non-finite loss; update aborted")
    return loss, stats


# ---------------------------------------------------------------------------
# Roles
# ---------------------------------------------------------------------------
@dataclass
class Role:
    name: str
    spec: ad.NetworkSpec
    params: ad.ParamSet
    opt: ad.Adam


def _make_role(name: str, spec: ad.NetworkSpec, rng: np.random.Generator, ppo: PPOConfig) -> Role:
    params = ad.init_params(spec, rng)
    rows = spec.n_agents if spec.kind is NetKind.LOCAL_GAT else None
    opt = ad.Adam(list(params), lr=ppo.lr, beta1=ppo.adam_beta1, beta2=ppo.adam_beta2,
                  eps=ppo.adam_eps, n_rows=rows)
    return Role(name, spec, params, opt)


@dataclass
class RoleBatch:
    """Flattened samples of one role after GAE. Leading axis is the sample axis."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    targets: np.ndarray | None = None  # attacker target head

    def __len__(self) -> int:
        return self.obs.shape[0]


class Policies:
    """Every network of one run, plus the fixed pieces the rollout needs."""

    def __init__(self, cfg: RunConfig, seed: int, rules: RuleConfig | None = None):
        cfg.validate()
        self.cfg = cfg
        self.mode = cfg.mode
        env = cfg.env
        self.n = env.n_subsystems
        self.ego = build_ego_graphs(env.topology)
        self.type_mask = env.attack_mask()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x1A17])))
        self.local = self.joint = self.coord = None
        if self.mode in (Mode.HAMARL, Mode.FLAT):
            self.local = _make_role("local", ad.local_gat_spec(self.n), rng, cfg.ppo)
        elif self.mode is Mode.SINGLE:
            self.joint = _make_role("joint", ad.joint_mlp_spec(self.n), rng, cfg.ppo)
        if self.mode is Mode.HAMARL:
            self.coord = _make_role("coord", ad.coord_mlp_spec(), rng, cfg.ppo)
        self.attacker = _make_role("attacker", ad.attacker_mlp_spec(self.n), rng, cfg.ppo)
        self.rules = rules if rules is not None else cfg.rules
        if self.mode is Mode.RULE and self.rules is None:
            self.rules = calibrate_rules(env, seed=seed)

    def roles(self) -> list[Role]:
        return [r for r in (self.local, self.joint, self.coord, self.attacker) if r is not None]

    # -- state dict -------------------------------------------------------
    def tensors(self, with_optimizer: bool = True) -> dict[str, np.ndarray]:
        out = {}
        for role in self.roles():
            for name, p in role.params.items():
                out[f"{role.name}/{name}"] = p.data
            if with_optimizer:
                st = role.opt.state_dict()
                for name, m, v in zip(role.params.names(), st["m"], st["v"]):
                    out[f"opt/{role.name}/m/{name}"] = m
                    out[f"opt/{role.name}/v/{name}"] = v
                out[f"opt/{role.name}/t"] = st["t"].astype(np.float64)
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        for role in self.roles():
            for name, p in role.params.items():
                key = f"{role.name}/{name}"
                if key not in tensors:
                    raise ckpt.CheckpointError(f"checkpoint lacks tensor {key}")
                if tensors[key].shape != p.data.shape:
                    raise ckpt.CheckpointError(
                        f"tensor {key}: shape {tensors[key].shape} does not match {p.data.shape}")
                p.data[...] = tensors[key]
            tkey = f"opt/{role.name}/t"
            if tkey in tensors:
                role.opt.load_state_dict({
                    "m": [tensors[f"opt/{role.name}/m/{n}"] for n in role.params.names()],
                    "v": [tensors[f"opt/{role.name}/v/{n}"] for n in role.params.names()],
                    "t": tensors[tkey].astype(np.int64),
                })


# ---------------------------------------------------------------------------
# Factorised joint policy
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class JointObservation:
    local: Sequence
    coordinator: object = None
    attacker: object = None


def _logp_of(logits, action: int, mask=None) -> float:
    return float(log_softmax_np(np.asarray(logits, dtype=np.float64), mask)[int(action)])


def joint_log_prob(local_policies: Sequence[Callable], coord_policy: Callable | None,
                   attacker_policy: Callable | None, observations: JointObservation,
                   joint_action: JointAction) -> float:
    """sum_i log pi_i(a_i|o_i) + log pi_coord(g) + log pi_att(a_att).

    Each policy maps its observation to logits. The attacker may return
    ``(type_logits, target_logits)``, in which case both heads contribute. A
    missing coordinator is a forced NOOP with probability 1.
    """
    if len(local_policies) != len(observations.local):
        raise ValueError("one observation per local policy is required")
    total = 0.0
    for pol, obs, a in zip(local_policies, observations.local, joint_action.local):
        total += _logp_of(pol(obs), a)
    if coord_policy is not None:
        total += _logp_of(coord_policy(observations.coordinator), joint_action.global_action)
    if attacker_policy is not None:
        out = attacker_policy(observations.attacker)
        if isinstance(out, tuple):
            total += _logp_of(out[0], joint_action.attack) + _logp_of(out[1], joint_action.attack_target)
        else:
            total += _logp_of(out, joint_action.attack)
    return total


# ---------------------------------------------------------------------------
# Attack mixtures for evaluation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class AttackMixture:
    """Evaluation-time attacker change: a log-prior added to the type head, or a scripted attacker."""

    type_bias: tuple[float, ...] | None = None
    scripted: str | None = None  # "all-dos"

    @classmethod
    def parse(cls, text: str | None) -> "AttackMixture | None":
        if not text:
            return None
        t = text.strip().lower()
        if t in ("all-dos", "dos", "scripted-dos"):
            return cls(scripted="all-dos")
        if t.startswith("weights:"):
            w = np.ones(len(AttackType))
            for part in t[len("weights:"):].split(","):
                k, _, v = part.partition("=")
                try:
                    w[AttackType[k.strip().upper()]] = float(v)
                except (KeyError, ValueError):
                    raise ConfigError(f"attack_mixture: bad weight entry {part!r}") from None
            if (w < 0).any() or not (w > 0).any():
                raise ConfigError("attack_mixture: weights must be >= 0 with one positive")
            with np.errstate(divide="ignore"):
                bias = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), -1e9)
            return cls(type_bias=tuple(float(b) for b in bias))
        raise ConfigError(f"attack_mixture: unknown mixture {text!r}")


def _scripted_all_dos(state) -> tuple[int, int]:
    targets = np.flatnonzero(state.revealed & (state.dos_left == 0))
    if targets.size:
        return int(AttackType.DOS), int(targets[0])
    hidden = np.flatnonzero(~state.revealed)
    return int(AttackType.SCAN), int(hidden[0] if hidden.size else 0)


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------
def episode_seeds(seed: int, index: int) -> tuple[int, np.random.Generator]:
    """Environment seed and action generator for episode ``index`` of a run.

    Both come from ``numpy.random.SeedSequence([seed, index])``: its first 64-bit
    word seeds the environment, its first spawned child seeds the action draws.
    """
    ss = np.random.SeedSequence([int(seed), int(index)])
    env_seed = int(ss.generate_state(1, np.uint64)[0])
    return env_seed, np.random.Generator(np.random.PCG64(ss.spawn(1)[0]))


EVAL_OFFSET = 1_000_000  # evaluation episode indices start here


@dataclass
class EpisodeSummary:
    counts: ConfusionCounts
    delays: list[int]
    ret: float
    attacker_return: float
    coord_return: float
    comp_trace: np.ndarray  # (T, n) bool, compromise at end of each step
    downtime: int
    length: int
    terminated: bool
    attack_counts: tuple[int, ...] = (0, 0, 0, 0)  # attacker moves per AttackType

    @property
    def tamper_steps(self) -> int:
        return self.attack_counts[AttackType.TAMPER]

    @property
    def rho(self) -> float:
        return compute_resilience(self.comp_trace).rho


@dataclass
class RolloutResult:
    episodes: list[EpisodeSummary]
    batches: dict[str, RoleBatch] = field(default_factory=dict)


def _draw(logp: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draws; ``u`` has the shape of ``logp`` minus the last axis."""
    cdf = np.cumsum(np.exp(logp), axis=-1)
    a = (u[..., None] * cdf[..., -1:] >= cdf).sum(axis=-1)
    return np.minimum(a, logp.shape[-1] - 1)


def _pick(logp: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(logp, idx[..., None], axis=-1)[..., 0]


def _reset_target(alerts: np.ndarray) -> int:
    """RESET_NODE goes to the lowest-index subsystem that alerted on the previous step."""
    hits = np.flatnonzero(alerts)
    return int(hits[0]) if hits.size else -1


def _forward(pol: Policies, obs: np.ndarray, alerts: np.ndarray, att_obs: np.ndarray):
    """Batched pass of every network. obs (E, N, 17), alerts (E, N), att_obs (E, 4N+1)."""
    out = {}
    with ad.no_grad():
        if pol.local is not None:
            x = np.transpose(obs[:, pol.ego.index] * pol.ego.feature_mask, (1, 0, 2, 3))
            o = ad.forward(pol.local.spec, pol.local.params, x, pol.ego.adj)
            out["local_logits"] = np.transpose(o.logits.data, (1, 0, 2))  # (E, N, 4)
            out["local_value"] = o.value.data.T  # (E, N)
            if pol.coord is not None:
                cin = coordinator_input(np.transpose(o.embedding.data, (1, 0, 2)), alerts)
                oc = ad.forward(pol.coord.spec, pol.coord.params, cin)
                out["coord_in"] = cin
                out["coord_logits"] = oc.logits.data
                out["coord_value"] = oc.value.data
        elif pol.joint is not None:
            oj = ad.forward(pol.joint.spec, pol.joint.params, obs.reshape(obs.shape[0], -1))
            out["joint_logits"] = oj.logits.data  # (E, N, 4)
            out["joint_value"] = oj.value.data
        oa = ad.forward(pol.attacker.spec, pol.attacker.params, att_obs)
        out["att_type_logits"] = oa.logits.data
        out["att_target_logits"] = oa.target_logits.data
        out["att_value"] = oa.value.data
    return out


def rollout(pol: Policies, env_cfg: EnvConfig, seed: int, indices: Sequence[int], *,
            collect: bool = True, greedy: bool = False,
            mixture: AttackMixture | None = None) -> RolloutResult:
    """Play episodes ``indices`` of run ``seed`` in lockstep.

    ``greedy`` makes the defenders (locals and coordinator) take their most
    likely action; the attacker always samples.
    """
    cfg = pol.cfg
    rcfg = cfg.rewards
    n = env_cfg.n_subsystems
    if n != pol.n:
        raise ConfigError(f"n_subsystems: policies were built for {pol.n} subsystems, env has {n}")
    type_mask = env_cfg.attack_mask()
    type_bias = np.zeros(len(AttackType)) if mixture is None or mixture.type_bias is None \
        else np.asarray(mixture.type_bias)
    scripted = mixture.scripted if mixture is not None else None
    E = len(indices)
    states, rngs = [], []
    for idx in indices:
        es, ar = episode_seeds(seed, idx)
        states.append(reset(env_cfg, seed=es))
        rngs.append(ar)
    trackers = [DetectionTracker(n) for _ in range(E)]
    counts = [ConfusionCounts() for _ in range(E)]
    rets = np.zeros(E)
    att_rets = np.zeros(E)
    coord_rets = np.zeros(E)
    traces: list[list[np.ndarray]] = [[] for _ in range(E)]
    downtime = np.zeros(E, dtype=np.int64)
    moves = np.zeros((E, len(AttackType)), dtype=np.int64)
    # per-episode, per-role step records
    rec = [dict(obs=[], la=[], llp=[], lv=[], lr=[], ci=[], ca=[], clp=[], cv=[], cr=[],
                ao=[], at=[], ag=[], alp=[], av=[], ar=[], done=[]) for _ in range(E)]
    live = list(range(E))
    while live:
        obs = np.stack([observe_all(states[e]) for e in live])
        alerts = np.stack([states[e].alerts for e in live]).astype(np.float64)
        att_obs = np.stack([observe_attacker(states[e]).vector() for e in live])
        out = _forward(pol, obs, alerts, att_obs)
        u = np.stack([rngs[e].random(n + 3) for e in live])
        # defenders
        if pol.local is not None:
            lp = log_softmax_np(out["local_logits"])
            la = np.argmax(lp, -1) if greedy else _draw(lp, u[:, :n])
            local_logp, local_v = _pick(lp, la), out["local_value"]
        elif pol.joint is not None:
            lp = log_softmax_np(out["joint_logits"])
            la = np.argmax(lp, -1) if greedy else _draw(lp, u[:, :n])
            local_logp, local_v = _pick(lp, la), out["joint_value"]
        else:
            la = rule_actions(obs, pol.rules)
            local_logp = local_v = None
        if pol.coord is not None:
            cp = log_softmax_np(out["coord_logits"])
            ca = np.argmax(cp, -1) if greedy else _draw(cp, u[:, n])
            coord_logp = _pick(cp, ca)
        else:
            ca = np.zeros(len(live), dtype=np.int64)
            coord_logp = None
        # attacker
        tp = log_softmax_np(out["att_type_logits"] + type_bias, type_mask)
        at = _draw(tp, u[:, n + 1])
        gp = log_softmax_np(out["att_target_logits"])
        ag = _draw(gp, u[:, n + 2])
        att_logp = _pick(tp, at) + _pick(gp, ag)

        still = []
        for k, e in enumerate(live):
            s = states[e]
            atk, tgt = int(at[k]), int(ag[k])
            if scripted == "all-dos":
                atk, tgt = _scripted_all_dos(s)
            g = int(ca[k])
            action = JointAction(la[k].astype(np.int64), g,
                                 _reset_target(s.alerts) if g == GlobalAction.RESET_NODE else -1,
                                 atk, tgt)
            s, oc = step(s, action, inplace=True)
            moves[e, atk] += 1
            rr = step_rewards(oc, s.t - 1, rcfg)
            # compromise right after the attack: survivors plus those remediated this step
            comp_before_defence = s.compromised.copy()
            for i in oc.newly_restored:
                comp_before_defence[i] = True
            trackers[e].update(s.t - 1, comp_before_defence, oc.labels, s.compromised)
            counts[e].add_labels(oc.labels)
            rets[e] += rr.global_reward + float(rr.local.sum())
            att_rets[e] += rr.attacker
            coord_rets[e] += rr.global_reward
            traces[e].append(s.compromised.copy())
            downtime[e] += oc.downtime_now
            if collect:
                r = rec[e]
                r["obs"].append(obs[k])
                r["ao"].append(att_obs[k])
                r["at"].append(at[k])
                r["ag"].append(ag[k])
                r["alp"].append(att_logp[k])
                r["av"].append(out["att_value"][k])
                r["ar"].append(rr.attacker)
                r["done"].append(oc.terminated)
                if local_logp is not None:
                    r["la"].append(la[k])
                    r["llp"].append(local_logp[k])
                    r["lv"].append(local_v[k])
                    if pol.joint is not None:
                        r["lr"].append(float(rr.local.sum()) + rr.global_reward)
                    else:
                        r["lr"].append(rr.local + rcfg.global_share * rr.global_reward)
                if coord_logp is not None:
                    r["ci"].append(out["coord_in"][k])
                    r["ca"].append(ca[k])
                    r["clp"].append(coord_logp[k])
                    r["cv"].append(out["coord_value"][k])
                    r["cr"].append(rr.global_reward)
            if not s.done:
                still.append(e)
        live = still

    episodes = [
        EpisodeSummary(
            counts=counts[e], delays=list(trackers[e].delays), ret=float(rets[e]),
            attacker_return=float(att_rets[e]), coord_return=float(coord_rets[e]),
            comp_trace=np.array(traces[e], dtype=bool), downtime=int(downtime[e]),
            length=states[e].t, terminated=states[e].terminated,
            attack_counts=tuple(int(x) for x in moves[e]),
        )
        for e in range(E)
    ]
    result = RolloutResult(episodes)
    if collect:
        result.batches = _build_batches(pol, states, rec, cfg.gae)
    return result


def _build_batches(pol: Policies, states, rec, gae_cfg: GAEConfig) -> dict[str, RoleBatch]:
    # bootstrap values for episodes cut off by the horizon
    trunc = [e for e, s in enumerate(states) if not s.terminated]
    boot = {}
    if trunc:
        obs = np.stack([observe_all(states[e]) for e in trunc])
        alerts = np.stack([states[e].alerts for e in trunc]).astype(np.float64)
        att_obs = np.stack([observe_attacker(states[e]).vector() for e in trunc])
        out = _forward(pol, obs, alerts, att_obs)
        for k, e in enumerate(trunc):
            boot[e] = {
                "l": out["local_value"][k] if pol.local is not None
                else (out["joint_value"][k] if pol.joint is not None else 0.0),
                "c": out["coord_value"][k] if pol.coord is not None else 0.0,
                "a": out["att_value"][k],
            }

    def run_gae(e, rkey, vkey, bkey):
        r = rec[e]
        b = boot[e][bkey] if e in boot else 0.0
        return gae(r[rkey], r[vkey], r["done"], b, gae_cfg.gamma, gae_cfg.lam)

    batches = {}
    eps = range(len(states))
    adv_a, ret_a = zip(*(run_gae(e, "ar", "av", "a") for e in eps))
    batches["attacker"] = RoleBatch(
        obs=np.concatenate([np.stack(rec[e]["ao"]) for e in eps]),
        actions=np.concatenate([np.asarray(rec[e]["at"]) for e in eps]),
        targets=np.concatenate([np.asarray(rec[e]["ag"]) for e in eps]),
        log_probs=np.concatenate([np.asarray(rec[e]["alp"]) for e in eps]),
        advantages=np.concatenate(adv_a), returns=np.concatenate(ret_a),
    )
    if pol.local is not None or pol.joint is not None:
        adv_l, ret_l = zip(*(run_gae(e, "lr", "lv", "l") for e in eps))
        batches["local" if pol.local is not None else "joint"] = RoleBatch(
            obs=np.concatenate([np.stack(rec[e]["obs"]) for e in eps]),
            actions=np.concatenate([np.stack(rec[e]["la"]) for e in eps]),
            log_probs=np.concatenate([np.stack(rec[e]["llp"]) for e in eps]),
            advantages=np.concatenate(adv_l), returns=np.concatenate(ret_l),
        )
    if pol.coord is not None:
        adv_c, ret_c = zip(*(run_gae(e, "cr", "cv", "c") for e in eps))
        batches["coord"] = RoleBatch(
            obs=np.concatenate([np.stack(rec[e]["ci"]) for e in eps]),
            actions=np.concatenate([np.asarray(rec[e]["ca"]) for e in eps]),
            log_probs=np.concatenate([np.asarray(rec[e]["clp"]) for e in eps]),
            advantages=np.concatenate(adv_c), returns=np.concatenate(ret_c),
        )
    return batches


# ---------------------------------------------------------------------------
# Updates
# ---------------------------------------------------------------------------
def _minibatches(rng: np.random.Generator, n: int, size: int):
    perm = rng.permutation(n)
    for start in range(0, n, size):
        yield perm[start : start + size]


def _mean_stats(rows: list[dict]) -> dict:
    if not rows:
        return {}
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def _mlp_loss(role: Role, batch: RoleBatch, idx, adv, ppo: PPOConfig, type_mask=None):
    x = batch.obs[idx]
    old = batch.log_probs[idx]
    if role.spec.kind is NetKind.JOINT_MLP:
        x = x.reshape(len(idx), -1)
        old = old.sum(axis=-1) if old.ndim == 2 else old
    o = ad.forward(role.spec, role.params, x)
    if role.spec.kind is NetKind.ATTACKER_MLP:
        lp1, e1 = _head(o.logits, batch.actions[idx], type_mask)
        lp2, e2 = _head(o.target_logits, batch.targets[idx])
        logp, ent = lp1 + lp2, e1 + e2
    elif role.spec.kind is NetKind.JOINT_MLP:
        lp, e = _head(o.logits, batch.actions[idx])  # (b, N)
        logp, ent = T.tsum(lp, axis=-1), T.tsum(e, axis=-1)
    else:
        logp, ent = _head(o.logits, batch.actions[idx])
    return ppo_loss(logp, ent, o.value, old, adv[idx], batch.returns[idx], ppo)


def update_role(role: Role, batch: RoleBatch, ppo: PPOConfig, rng: np.random.Generator, *,
                lr: float | None = None, type_mask=None) -> dict:
    """PPO epochs over one MLP role's batch. Parameters are updated in place."""
    adv = normalize_advantages(batch.advantages)
    rows = []
    for _ in range(ppo.epochs_per_batch):
        for idx in _minibatches(rng, len(batch), ppo.minibatch_size):
            role.params.zero_grad()
            loss, st = _mlp_loss(role, batch, idx, adv, ppo, type_mask)
            loss.backward()
            role.opt.step(lr=lr)
            rows.append(st)
    return _mean_stats(rows)


def _gat_inputs(pol: Policies, obs: np.ndarray, agents) -> np.ndarray:
    """Ego-graph features (A, b, M, 17) for the given agents from stacked obs (b, N, 17)."""
    ego = pol.ego
    x = obs[:, ego.index[agents]] * ego.feature_mask[agents]  # (b, A, M, 17)
    return np.transpose(x, (1, 0, 2, 3))


def update_locals_joint(pol: Policies, batch: RoleBatch, ppo: PPOConfig, rng, lr=None) -> dict:
    """One vectorised update of all stacked defenders with a shared minibatch order."""
    role = pol.local
    adv = normalize_advantages(batch.advantages)  # pooled over samples and agents
    agents = np.arange(pol.n)
    rows = []
    for _ in range(ppo.epochs_per_batch):
        for idx in _minibatches(rng, len(batch), ppo.minibatch_size):
            role.params.zero_grad()
            x = _gat_inputs(pol, batch.obs[idx], agents)
            o = ad.forward(role.spec, role.params, x, pol.ego.adj)
            logp, ent = _head(o.logits, batch.actions[idx].T)
            loss, st = ppo_loss(logp, ent, o.value, batch.log_probs[idx].T, adv[idx].T,
                                batch.returns[idx].T, ppo)
            loss.backward()
            role.opt.step(lr=lr)
            rows.append(st)
    return _mean_stats(rows)


def update_locals_per_agent(pol: Policies, batch: RoleBatch, ppo: PPOConfig, rng, lr=None) -> dict:
    """Each defender updates on its own: own advantage normalisation, minibatch order and Adam clock."""
    role = pol.local
    rows = []
    for i in range(pol.n):
        view = role.params.agent_view(i)
        adj = pol.ego.adj[i : i + 1]
        adv = normalize_advantages(batch.advantages[:, i])
        for _ in range(ppo.epochs_per_batch):
            for idx in _minibatches(rng, len(batch), ppo.minibatch_size):
                view.zero_grad()
                x = _gat_inputs(pol, batch.obs[idx], [i])
                o = ad.forward(role.spec, view, x, adj)
                logp, ent = _head(o.logits, batch.actions[idx, i][None])
                loss, st = ppo_loss(logp, ent, o.value, batch.log_probs[idx, i][None],
                                    adv[idx][None], batch.returns[idx, i][None], ppo)
                loss.backward()
                role.opt.step(row=i, lr=lr)
                rows.append(st)
    return _mean_stats(rows)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------
STATS_COLUMNS = (
    "batch", "episodes", "elapsed_s", "batch_s",
    "defender_return", "coordinator_return", "attacker_return", "f1", "far", "rho",
    "local_policy_loss", "local_value_loss", "local_entropy", "local_clip_frac", "local_kl",
    "coord_policy_loss", "coord_value_loss", "coord_clip_frac", "coord_kl",
    "attacker_policy_loss", "attacker_value_loss", "attacker_clip_frac", "attacker_kl",
)


@dataclass
class TrainStats:
    batch: int
    episodes: int
    elapsed_s: float
    batch_s: float
    defender_return: float
    coordinator_return: float
    attacker_return: float
    f1: float
    far: float | None
    rho: float
    losses: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in STATS_COLUMNS[:10]}
        for role, short in (("local", "local"), ("coord", "coord"), ("attacker", "attacker")):
            st = self.losses.get(role, {})
            d[f"{short}_policy_loss"] = st.get("policy_loss")
            d[f"{short}_value_loss"] = st.get("value_loss")
            d[f"{short}_clip_frac"] = st.get("clip_frac")
            d[f"{short}_kl"] = st.get("approx_kl")
            if short == "local":
                d["local_entropy"] = st.get("entropy")
        return d


def stats_csv(stats: Sequence[TrainStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for s in stats:
        r = s.row()
        w.writerow(["" if r[c] is None else r[c] for c in STATS_COLUMNS])
    return buf.getvalue()


@dataclass
class EvalResult:
    metrics: MetricsReport
    rhos: list[float]
    episodes: list[EpisodeSummary]

    @property
    def mean_rho(self) -> float:
        return float(np.mean(self.rhos))


@dataclass
class TrainResult:
    policies: Policies
    stats: list[TrainStats]
    evaluation: EvalResult | None
    wall_clock: float
    episodes_done: int
    seed: int


def summarize(episodes: Sequence[EpisodeSummary]) -> MetricsReport:
    total = ConfusionCounts()
    delays: list[int] = []
    for ep in episodes:
        total = total + ep.counts
        delays.extend(ep.delays)
    return compute_metrics(total, delays, [ep.ret for ep in episodes])


def evaluate(pol: Policies, seed: int, episodes: int, *, env_cfg: EnvConfig | None = None,
             greedy: bool | None = None, mixture: AttackMixture | None = None,
             lockstep: int = 32) -> EvalResult:
    """Frozen-policy evaluation on held-out episode indices."""
    env_cfg = env_cfg if env_cfg is not None else pol.cfg.env
    greedy = pol.cfg.greedy_eval if greedy is None else greedy
    eps: list[EpisodeSummary] = []
    for start in range(0, episodes, lockstep):
        idx = [EVAL_OFFSET + j for j in range(start, min(episodes, start + lockstep))]
        eps.extend(rollout(pol, env_cfg, seed, idx, collect=False, greedy=greedy, mixture=mixture).episodes)
    return EvalResult(summarize(eps), [ep.rho for ep in eps], eps)


def _update_all(pol: Policies, batches: dict[str, RoleBatch], ppo: PPOConfig, rng, lr: float,
                which: set[str]) -> dict:
    losses = {}
    if pol.local is not None and "local" in which:
        if pol.mode is Mode.HAMARL:
            losses["local"] = update_locals_per_agent(pol, batches["local"], ppo, rng, lr)
        else:
            losses["local"] = update_locals_joint(pol, batches["local"], ppo, rng, lr)
    if pol.joint is not None and "local" in which:
        losses["local"] = update_role(pol.joint, batches["joint"], ppo, rng, lr=lr)
    if pol.coord is not None and "local" in which:
        losses["coord"] = update_role(pol.coord, batches["coord"], ppo, rng, lr=lr)
    if "attacker" in which:
        losses["attacker"] = update_role(pol.attacker, batches["attacker"], ppo, rng, lr=lr,
                                         type_mask=pol.type_mask)
    return losses


def checkpoint_meta(pol: Policies, episodes_done: int, batches_done: int) -> dict:
    return {
        "mode": pol.mode.value,
        "config": run_config_to_text(pol.cfg),
        "rules": dataclasses.asdict(pol.rules) if pol.rules is not None else None,
        "episodes_done": episodes_done,
        "batches_done": batches_done,
        "specs": {r.name: r.spec.to_dict() for r in pol.roles()},
    }


def save_checkpoint(path, pol: Policies, seed: int, episodes_done: int, batches_done: int) -> None:
    lineage = {
        "seed": int(seed),
        "episode_seed_rule": "SeedSequence([seed, episode_index])",
        "update_seed_rule": "SeedSequence([seed, 0xC0FFEE, batch_index])",
        "next_episode": episodes_done,
        "next_batch": batches_done,
    }
    ckpt.save(path, pol.tensors(), checkpoint_meta(pol, episodes_done, batches_done), lineage)


def load_checkpoint(path, cfg: RunConfig | None = None) -> tuple[Policies, int, int, int]:
    """Rebuild policies from a checkpoint. Returns (policies, seed, episodes_done, batches_done).

    When ``cfg`` is given its environment must match the one the checkpoint was trained on.
    """
    tensors, meta, lineage = ckpt.load(path)
    try:
        saved = run_config_from_text(meta["config"])
        seed = int(lineage["seed"])
        ep_done, b_done = int(meta["episodes_done"]), int(meta["batches_done"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ckpt.CheckpointError(f"checkpoint metadata is incomplete: {exc}") from exc
    if cfg is not None and cfg.env.n_subsystems != saved.env.n_subsystems:
        raise ckpt.CheckpointError(
            f"checkpoint/config mismatch: checkpoint has {saved.env.n_subsystems} subsystems, "
            f"config has {cfg.env.n_subsystems}")
    if cfg is not None and cfg.env.topology != saved.env.topology:
        raise ckpt.CheckpointError("checkpoint/config mismatch: topology differs")
    rules = RuleConfig(**meta["rules"]) if meta.get("rules") else None
    pol = Policies(saved, seed, rules=rules)
    pol.load_tensors(tensors)
    return pol, seed, ep_done, b_done


def train(cfg: RunConfig, seed: int, *, evaluate_final: bool = True, resume: str | None = None,
          checkpoint_path: str | None = None, stats_path: str | None = None,
          progress: Callable[[TrainStats], None] | None = None,
          max_batches: int | None = None) -> TrainResult:
    """Co-train defenders and attacker for ``cfg.ppo.total_episodes`` episodes.

    Every batch of ``batch_episodes`` episodes feeds one update of every learning
    role. A final partial batch is used as is. ``wall_clock`` covers the
    training loop only (no evaluation, no file output).
    """
    cfg.validate()
    ppo = cfg.ppo
    if resume is not None:
        pol, seed, done, k = load_checkpoint(resume, cfg)
        pol.cfg = cfg
    else:
        pol, done, k = Policies(cfg, seed), 0, 0
    stats: list[TrainStats] = []
    t0 = time.perf_counter()
    elapsed = 0.0
    batches_run = 0
    while done < ppo.total_episodes and (max_batches is None or batches_run < max_batches):
        tb = time.perf_counter()
        size = min(ppo.batch_episodes, ppo.total_episodes - done)
        res = rollout(pol, cfg.env, seed, range(done, done + size), collect=True)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xC0FFEE, k])))
        lr = ad.learning_rate(ppo.lr, ppo.lr_schedule, k + 1)
        which = {"local", "attacker"}
        if ppo.update_schedule == "alternating":
            which = {"local"} if k % 2 == 0 else {"attacker"}
        losses = _update_all(pol, res.batches, ppo, rng, lr, which)
        done += size
        k += 1
        batches_run += 1
        now = time.perf_counter()
        elapsed = now - t0
        rep = summarize(res.episodes)
        st = TrainStats(
            batch=k, episodes=done, elapsed_s=elapsed, batch_s=now - tb,
            defender_return=float(np.mean([e.ret for e in res.episodes])),
            coordinator_return=float(np.mean([e.coord_return for e in res.episodes])),
            attacker_return=float(np.mean([e.attacker_return for e in res.episodes])),
            f1=rep.f1, far=rep.far, rho=float(np.mean([e.rho for e in res.episodes])),
            losses=losses,
        )
        stats.append(st)
        if progress is not None:
            progress(st)
    wall = time.perf_counter() - t0
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, pol, seed, done, k)
    if stats_path is not None:
        with open(stats_path, "w", encoding="utf-8") as fh:
            fh.write(stats_csv(stats))
    ev = evaluate(pol, seed, cfg.eval_episodes) if evaluate_final else None
    return TrainResult(pol, stats, ev, wall, done, seed)
