"""Seeded partially observed Markov game over N PLC-driven subsystems.

One step resolves the attacker's move first, then every local defender's
action, then the coordinator's global action. Ground truth lives in
:class:`EnvState`; agents only ever see the projections built in
:mod:`cpsguard.observe`.
"""
from __future__ import annotations

import configparser
import copy
import dataclasses
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

N_CHANNELS = 12  # sensor channels per subsystem seen by a defender
N_NET = 5  # packet loss, RTT, SYN count, tamper residual, quarantine flag
EXTERNAL = -1  # the attacker's implicit foothold outside the plant


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class EpisodeOver(RuntimeError):
    pass


class ActionError(ValueError):
    pass


class LocalAction(enum.IntEnum):
    NOOP = 0
    ALERT = 1
    QUARANTINE = 2
    PATCH = 3


class GlobalAction(enum.IntEnum):
    NOOP = 0
    ISOLATE_SEG = 1
    ROLL_PATCH = 2
    RESET_NODE = 3


class AttackType(enum.IntEnum):
    SCAN = 0
    LATERAL = 1
    DOS = 2
    TAMPER = 3


class Label(enum.IntEnum):
    TN = 0
    TP = 1
    FP = 2
    FN = 3
    NONE = 4


def ring_with_chords(n: int) -> list[list[int]]:
    """Ring over ``n`` nodes plus two chords (0, n/2) and (n/4, 3n/4) when they are new edges."""
    adj: list[set[int]] = [set() for _ in range(n)]

    def link(a, b):
        if a != b:
            adj[a].add(b)
            adj[b].add(a)

    for i in range(n):
        if n > 1:
            link(i, (i + 1) % n)
    if n >= 6:
        link(0, n // 2)
        link(n // 4, (3 * n) // 4)
    return [sorted(s) for s in adj]


@dataclass
class EnvConfig:
    n_subsystems: int = 8
    sensors_per_subsystem: int = 8
    episode_length: int = 200
    p_scan_reveal: float = 0.9
    p_lateral_success: float = 0.35
    p_dos_success: float = 0.5
    p_tamper_success: float = 0.4
    patch_block_bonus: float = 0.5
    dos_downtime_steps: int = 3
    quarantine_steps: int = 3
    attacker_reward_per_step: float = 0.1
    defender_cost_per_step: float = 0.5
    topology: list[list[int]] | None = None
    entry_nodes: list[int] | None = None
    attack_types: tuple[str, ...] = ("SCAN", "LATERAL", "DOS", "TAMPER")
    attacker_enabled: bool = True
    fail_on_full_compromise: bool = True
    seed: int = 42

    def __post_init__(self):
        if self.topology is None and self.n_subsystems >= 1:
            self.topology = ring_with_chords(self.n_subsystems)
        if self.entry_nodes is None and self.topology is not None and self.n_subsystems >= 1:
            degrees = [len(nb) for nb in self.topology]
            lo = min(degrees)
            self.entry_nodes = [i for i, d in enumerate(degrees) if d == lo]
        self.attack_types = tuple(str(a).upper() for a in self.attack_types)

    def validate(self) -> "EnvConfig":
        if self.n_subsystems < 1:
            raise ConfigError("n_subsystems: must satisfy n_subsystems >= 1")
        if self.episode_length < 1:
            raise ConfigError("episode_length: must satisfy episode_length >= 1")
        if not 1 <= self.sensors_per_subsystem <= N_CHANNELS:
            raise ConfigError(f"sensors_per_subsystem: must lie in [1, {N_CHANNELS}]")
        for name in ("p_scan_reveal", "p_lateral_success", "p_dos_success",
                     "p_tamper_success", "patch_block_bonus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}: probability must lie in [0, 1], got {v}")
        for name in ("dos_downtime_steps", "quarantine_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if not self.attacker_reward_per_step > 0:
            raise ConfigError("attacker_reward_per_step: r_a must be > 0")
        if not self.defender_cost_per_step > 0:
            raise ConfigError("defender_cost_per_step: c must be > 0")
        topo = self.topology
        if topo is None or len(topo) != self.n_subsystems:
            raise ConfigError("topology: needs one adjacency list per subsystem")
        for i, nbrs in enumerate(topo):
            for j in nbrs:
                if not 0 <= j < self.n_subsystems or j == i:
                    raise ConfigError(f"topology: bad neighbour {j} of node {i}")
                if i not in topo[j]:
                    raise ConfigError(f"topology: edge {i}-{j} is not symmetric")
        seen = {0}
        frontier = [0]
        while frontier:
            for j in topo[frontier.pop()]:
                if j not in seen:
                    seen.add(j)
                    frontier.append(j)
        if len(seen) != self.n_subsystems:
            raise ConfigError("topology: graph is not connected")
        if not self.entry_nodes or any(not 0 <= e < self.n_subsystems for e in self.entry_nodes):
            raise ConfigError("entry_nodes: need at least one valid subsystem index")
        unknown = set(self.attack_types) - {a.name for a in AttackType}
        if unknown:
            raise ConfigError(f"attack_types: unknown {sorted(unknown)}")
        return self

    def segments(self) -> np.ndarray:
        """Segment id per subsystem: first half of the index range is 0, second half 1."""
        return (np.arange(self.n_subsystems) >= (self.n_subsystems + 1) // 2).astype(np.int64)

    def attack_mask(self) -> np.ndarray:
        return np.array([a.name in self.attack_types for a in AttackType], dtype=bool)

    def replace(self, **changes) -> "EnvConfig":
        d = dataclasses.asdict(self)
        if "n_subsystems" in changes and "topology" not in changes:
            d["topology"] = None
            d["entry_nodes"] = None
        d.update(changes)
        return EnvConfig(**d)

    # -- key = value text form ------------------------------------------------
    def to_section(self) -> dict[str, str]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "topology":
                out[f.name] = ";".join(",".join(str(j) for j in nb) for nb in v)
            elif f.name in ("entry_nodes", "attack_types"):
                out[f.name] = ",".join(str(x) for x in v)
            else:
                out[f.name] = str(v)
        return out

    @classmethod
    def from_section(cls, section) -> "EnvConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in section:
                continue
            raw = section[f.name].strip()
            try:
                if f.name == "topology":
                    kwargs[f.name] = [[int(j) for j in part.split(",") if j.strip()]
                                      for part in raw.split(";")]
                elif f.name == "entry_nodes":
                    kwargs[f.name] = [int(x) for x in raw.split(",") if x.strip()]
                elif f.name == "attack_types":
                    kwargs[f.name] = tuple(x.strip() for x in raw.split(",") if x.strip())
                elif f.type in ("bool",):
                    kwargs[f.name] = raw.lower() in ("1", "true", "yes", "on")
                elif f.type in ("int",):
                    kwargs[f.name] = int(raw)
                else:
                    kwargs[f.name] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"{f.name}: cannot parse {raw!r}") from exc
        unknown = set(section) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown env field")
        if "n_subsystems" in kwargs and "topology" not in kwargs:
            kwargs["topology"] = None
        return cls(**kwargs)


@dataclass(frozen=True)
class SubsystemState:
    """Read-only snapshot of one subsystem."""

    id: int
    compromised: bool
    compromise_age: int
    quarantined: bool
    quarantine_remaining: int
    patched: bool
    dos_suppressed: int
    sensor_baseline: tuple[float, ...]
    attacker_knowledge: bool


@dataclass
class EnvState:
    """Ground truth for one episode. Per-subsystem fields are length-N arrays."""

    config: EnvConfig
    compromised: np.ndarray
    compromise_age: np.ndarray
    tampered: np.ndarray
    quarantine_left: np.ndarray
    patched: np.ndarray
    dos_left: np.ndarray
    revealed: np.ndarray
    sensor_baseline: np.ndarray  # (N, 12)
    drift_dir: np.ndarray  # (N, 12) unit-magnitude signs of compromise drift
    sensors: np.ndarray  # (N, 12) current normalised readings
    net_stats: np.ndarray  # (N, 5)
    alerts: np.ndarray  # defender claims raised on the previous step
    reported: np.ndarray  # current incident already claimed by its defender
    isolated_until: int
    last_attack_success: bool
    t: int
    uptime_steps: int
    downtime_steps: int
    terminated: bool
    rng: np.random.Generator = field(repr=False)

    @property
    def n(self) -> int:
        return self.compromised.shape[0]

    @property
    def done(self) -> bool:
        return self.terminated or self.t >= self.config.episode_length

    def subsystems(self) -> list[SubsystemState]:
        return [self.subsystem(i) for i in range(self.n)]

    def subsystem(self, i: int) -> SubsystemState:
        return SubsystemState(
            id=i,
            compromised=bool(self.compromised[i]),
            compromise_age=int(self.compromise_age[i]),
            quarantined=bool(self.quarantine_left[i] > 0),
            quarantine_remaining=int(self.quarantine_left[i]),
            patched=bool(self.patched[i]),
            dos_suppressed=int(self.dos_left[i]),
            sensor_baseline=tuple(float(x) for x in self.sensor_baseline[i]),
            attacker_knowledge=bool(self.revealed[i]),
        )

    def copy(self) -> "EnvState":
        new = copy.copy(self)
        for name in ("compromised", "compromise_age", "tampered", "quarantine_left", "patched",
                     "dos_left", "revealed", "sensors", "net_stats", "alerts", "reported"):
            setattr(new, name, getattr(self, name).copy())
        new.rng = copy.deepcopy(self.rng)
        return new

    def fingerprint(self) -> bytes:
        """Bytes that identify the full state, generator included."""
        parts = [np.asarray(getattr(self, k)).tobytes() for k in (
            "compromised", "compromise_age", "tampered", "quarantine_left", "patched", "dos_left",
            "revealed", "sensor_baseline", "drift_dir", "sensors", "net_stats", "alerts", "reported")]
        scalars = (self.isolated_until, self.last_attack_success, self.t, self.uptime_steps,
                   self.downtime_steps, self.terminated)
        parts.append(repr(scalars).encode())
        parts.append(json.dumps(self.rng.bit_generator.state, sort_keys=True).encode())
        return b"|".join(parts)

    def to_record(self) -> dict:
        return {
            "t": self.t,
            "compromised": [int(i) for i in np.flatnonzero(self.compromised)],
            "quarantined": [int(i) for i in np.flatnonzero(self.quarantine_left > 0)],
            "patched": [int(i) for i in np.flatnonzero(self.patched)],
            "dos": [int(i) for i in np.flatnonzero(self.dos_left > 0)],
            "revealed": [int(i) for i in np.flatnonzero(self.revealed)],
            "uptime_steps": self.uptime_steps,
            "downtime_steps": self.downtime_steps,
            "net_stats": self.net_stats.round(6).tolist(),
        }


@dataclass
class JointAction:
    local: np.ndarray  # one LocalAction per subsystem
    global_action: int = GlobalAction.NOOP
    global_target: int = -1  # RESET_NODE target
    attack: int = AttackType.SCAN
    attack_target: int = 0
    attack_source: int | None = None  # LATERAL source; None lets the env pick a foothold

    @classmethod
    def make(cls, local: Iterable[int], global_action=GlobalAction.NOOP, global_target=-1,
             attack=AttackType.SCAN, attack_target=0, attack_source=None) -> "JointAction":
        return cls(np.asarray(list(local), dtype=np.int64), int(global_action), int(global_target),
                   int(attack), int(attack_target), attack_source)


@dataclass
class StepOutcome:
    labels: np.ndarray  # Label per subsystem
    newly_compromised: frozenset
    newly_restored: frozenset
    attacker_evasion_count: int
    comp_count: int
    downtime_now: int
    uptime_now: int
    attack_success: bool
    terminated: bool

    def counts(self) -> dict[str, int]:
        return {lab.name: int((self.labels == lab).sum()) for lab in Label}


def reset(config: EnvConfig, seed: int | None = None) -> EnvState:
    """Fresh episode: nothing compromised, quarantined or patched; t = 0."""
    config.validate()
    seed = config.seed if seed is None else seed
    rng = np.random.Generator(np.random.PCG64(seed))
    n = config.n_subsystems
    baseline = rng.uniform(0.3, 0.7, size=(n, N_CHANNELS))
    drift = np.where(rng.random((n, N_CHANNELS)) < 0.5, -1.0, 1.0)
    state = EnvState(
        config=config,
        compromised=np.zeros(n, dtype=bool),
        compromise_age=np.zeros(n, dtype=np.int64),
        tampered=np.zeros(n, dtype=bool),
        quarantine_left=np.zeros(n, dtype=np.int64),
        patched=np.zeros(n, dtype=bool),
        dos_left=np.zeros(n, dtype=np.int64),
        revealed=np.zeros(n, dtype=bool),
        sensor_baseline=baseline,
        drift_dir=drift,
        sensors=np.zeros((n, N_CHANNELS)),
        net_stats=np.zeros((n, N_NET)),
        alerts=np.zeros(n, dtype=bool),
        reported=np.zeros(n, dtype=bool),
        isolated_until=-1,
        last_attack_success=False,
        t=0,
        uptime_steps=0,
        downtime_steps=0,
        terminated=False,
        rng=rng,
    )
    _refresh_telemetry(state, np.zeros(n))
    return state


def compromise_set(state: EnvState) -> set[int]:
    return {int(i) for i in np.flatnonzero(state.compromised)}


# Telemetry model. All features are normalised to [0, 1].
SENSOR_NOISE = 0.03
DRIFT_RATE = 0.04
DRIFT_CAP = 0.16
LOSS_BASE = 0.02
LOSS_NOISE = 0.015
RTT_BASE = 0.2
RTT_NOISE = 0.05
RTT_COMPROMISE = 0.2
SYN_SCAN = 0.6
SYN_LATERAL = 0.4
SYN_BEACON = 0.1
BENIGN_SYN_RATE = 0.08
TAMPER_RESIDUAL = 0.35
RESIDUAL_NOISE = 0.02


def _refresh_telemetry(state: EnvState, syn_events: np.ndarray) -> None:
    """Draw next-step sensor readings and network statistics from ground truth."""
    rng = state.rng
    n = state.n
    age = state.compromise_age.astype(np.float64)
    drift = np.minimum(DRIFT_RATE * age, DRIFT_CAP)[:, None] * state.drift_dir
    sensors = state.sensor_baseline + rng.normal(0.0, SENSOR_NOISE, (n, N_CHANNELS)) + drift
    tamper_kick = state.tampered[:, None] * 0.25 * state.drift_dir[:, ::-1]
    state.sensors = np.clip(sensors + tamper_kick, 0.0, 1.0)

    dos = state.dos_left > 0
    loss = LOSS_BASE + np.abs(rng.normal(0.0, LOSS_NOISE, n))
    rtt = RTT_BASE + rng.normal(0.0, RTT_NOISE, n) + RTT_COMPROMISE * state.compromised
    benign = rng.random(n) < BENIGN_SYN_RATE
    benign_syn = benign * rng.uniform(0.1, 0.5, n)
    beacons = state.compromised * SYN_BEACON * rng.poisson(1.5, n)
    syn = syn_events + beacons + benign_syn
    residual = np.abs(rng.normal(0.0, RESIDUAL_NOISE, n)) + TAMPER_RESIDUAL * state.tampered
    quarantined = state.quarantine_left > 0
    net = state.net_stats
    net[:, 0] = np.where(dos, 1.0, loss)
    net[:, 1] = np.where(dos, 0.95, rtt)
    net[:, 2] = np.where(quarantined, 0.0, syn)
    net[:, 3] = residual
    net[:, 4] = quarantined
    if state.t == 0 and not syn_events.any():
        net[:, 2] = 0.0  # nothing on the wire before the first step
    np.clip(net, 0.0, 1.0, out=net)


def _validate_action(state: EnvState, action: JointAction) -> None:
    n = state.n
    local = np.asarray(action.local)
    if local.shape != (n,):
        raise ActionError(f"expected {n} local actions, got shape {local.shape}")
    if local.min(initial=0) < 0 or local.max(initial=0) > max(LocalAction):
        raise ActionError("local action out of range")
    if action.global_action not in tuple(GlobalAction):
        raise ActionError(f"bad global action {action.global_action}")
    if action.global_action == GlobalAction.RESET_NODE and not -1 <= action.global_target < n:
        raise ActionError(f"RESET_NODE target {action.global_target} out of range")
    if action.attack not in tuple(AttackType):
        raise ActionError(f"bad attack type {action.attack}")
    if not 0 <= action.attack_target < n:
        raise ActionError(f"attack target {action.attack_target} out of range")
    if action.attack_source is not None and not EXTERNAL <= action.attack_source < n:
        raise ActionError(f"attack source {action.attack_source} out of range")


def _resolve_attack(state: EnvState, action: JointAction, syn: np.ndarray) -> tuple[bool, set[int]]:
    cfg = state.config
    rng = state.rng
    kind = AttackType(action.attack)
    tgt = action.attack_target
    newly: set[int] = set()
    if not cfg.attacker_enabled or not cfg.attack_mask()[kind]:
        return False, newly
    quarantined = state.quarantine_left > 0
    if kind is AttackType.SCAN:
        syn[tgt] += SYN_SCAN
        ok = rng.random() < cfg.p_scan_reveal
        if ok:
            state.revealed[tgt] = True
        return ok, newly
    if kind is AttackType.DOS:
        if not state.revealed[tgt]:
            return False, newly
        ok = rng.random() < cfg.p_dos_success
        if ok:
            state.dos_left[tgt] = cfg.dos_downtime_steps
        return ok, newly
    if kind is AttackType.TAMPER:
        if not state.revealed[tgt] or quarantined[tgt]:
            return False, newly
        ok = rng.random() < cfg.p_tamper_success
        if ok:
            if not state.compromised[tgt]:
                newly.add(tgt)
            state.compromised[tgt] = True
            state.tampered[tgt] = True
        return ok, newly
    # LATERAL
    syn[tgt] += SYN_LATERAL
    src = action.attack_source
    if src is None:
        src = _pick_source(state, tgt)
    if src is None or not state.revealed[tgt] or quarantined[tgt] or state.compromised[tgt]:
        return False, newly
    if src == EXTERNAL:
        if tgt not in cfg.entry_nodes:
            return False, newly
    else:
        if not state.compromised[src] or quarantined[src] or tgt not in cfg.topology[src]:
            return False, newly
        syn[src] += 0.5 * SYN_LATERAL
        seg = cfg.segments()
        if state.isolated_until == state.t and seg[src] != seg[tgt]:
            return False, newly
    p = cfg.p_lateral_success * ((1.0 - cfg.patch_block_bonus) if state.patched[tgt] else 1.0)
    ok = rng.random() < p
    if ok:
        state.compromised[tgt] = True
        newly.add(tgt)
    return ok, newly


def _pick_source(state: EnvState, tgt: int) -> int | None:
    """Lowest-index usable foothold adjacent to ``tgt``; the outside if ``tgt`` is an entry node."""
    quarantined = state.quarantine_left > 0
    for j in state.config.topology[tgt]:
        if state.compromised[j] and not quarantined[j]:
            return j
    if tgt in state.config.entry_nodes:
        return EXTERNAL
    return None


def step(state: EnvState, action: JointAction, inplace: bool = False) -> tuple[EnvState, StepOutcome]:
    """Advance one step. Returns the next state and the per-step outcome.

    With ``inplace=True`` the given state object is advanced and returned.
    """
    if state.done:
        raise EpisodeOver(f"step after episode end (t={state.t}, terminated={state.terminated})")
    _validate_action(state, action)
    s = state if inplace else state.copy()
    cfg = s.config
    n = s.n

    # 1. attacker
    syn = np.zeros(n)
    ok, newly = _resolve_attack(s, action, syn)
    s.last_attack_success = bool(ok)
    comp_now = s.compromised.copy()

    # 2. local defenders
    local = np.asarray(action.local, dtype=np.int64)
    claim = local != LocalAction.NOOP
    offline_before = s.quarantine_left > 0
    patch = local == LocalAction.PATCH
    # an incident scores once: repeating ALERT/QUARANTINE on it is unscored, PATCH still ends it
    repeat = claim & ~patch & comp_now & s.reported
    labels = np.where(
        claim,
        np.where(comp_now, np.where(repeat, Label.NONE, Label.TP), Label.FP),
        np.where(comp_now, Label.FN, np.where(offline_before, Label.NONE, Label.TN)),
    ).astype(np.int64)
    s.reported |= claim & comp_now
    quarantine = local == LocalAction.QUARANTINE
    s.quarantine_left[quarantine] = cfg.quarantine_steps
    s.compromised[patch] = False
    s.tampered[patch] = False
    s.patched[patch] = True
    s.alerts = claim.copy()

    # 3. coordinator
    resetting = np.zeros(n, dtype=bool)
    g = action.global_action
    if g == GlobalAction.ISOLATE_SEG:
        s.isolated_until = s.t + 1
    elif g == GlobalAction.ROLL_PATCH:
        online = s.quarantine_left == 0
        s.compromised[online] = False
        s.tampered[online] = False
        s.patched[online] = True
        resetting |= online
    elif g == GlobalAction.RESET_NODE and action.global_target >= 0:
        k = action.global_target
        s.compromised[k] = False
        s.tampered[k] = False
        s.dos_left[k] = 0
        resetting[k] = True

    evasion = int((labels == Label.FN).sum())
    restored = frozenset(int(i) for i in np.flatnonzero(comp_now & ~s.compromised))
    newly_set = frozenset(int(i) for i in newly)
    s.compromise_age = np.where(s.compromised, s.compromise_age + 1, 0)
    s.reported &= s.compromised

    # 4. accounting: every subsystem-step is either up or down
    down = (s.quarantine_left > 0) | (s.dos_left > 0) | resetting
    downtime_now = int(down.sum())
    uptime_now = n - downtime_now
    s.downtime_steps += downtime_now
    s.uptime_steps += uptime_now
    np.maximum(s.quarantine_left - 1, 0, out=s.quarantine_left)
    np.maximum(s.dos_left - 1, 0, out=s.dos_left)
    s.t += 1
    comp_count = int(s.compromised.sum())
    if cfg.fail_on_full_compromise and comp_count == n:
        s.terminated = True

    _refresh_telemetry(s, syn)
    outcome = StepOutcome(
        labels=labels,
        newly_compromised=newly_set,
        newly_restored=restored,
        attacker_evasion_count=evasion,
        comp_count=comp_count,
        downtime_now=downtime_now,
        uptime_now=uptime_now,
        attack_success=bool(ok),
        terminated=s.terminated,
    )
    return s, outcome


def force_compromise(state: EnvState, indices: Iterable[int]) -> EnvState:
    """Test helper: mark subsystems compromised as if by a prior intrusion."""
    for i in indices:
        state.compromised[i] = True
        state.revealed[i] = True
        state.compromise_age[i] = max(1, int(state.compromise_age[i]))
    return state


# -- configuration files --------------------------------------------------------
def write_config(path, sections: dict[str, dict[str, str]]) -> None:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for name, values in sections.items():
        cp[name] = values
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    with open(path, "r", encoding="utf-8") as fh:
        cp.read_file(fh)
    return cp


def config_to_text(cfg: EnvConfig) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["env"] = cfg.to_section()
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_from_text(text: str) -> EnvConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    return EnvConfig.from_section(cp["env"] if cp.has_section("env") else {})


class TraceWriter:
    """Line-delimited JSON record per step."""

    def __init__(self, fh):
        self.fh = fh

    def write(self, state: EnvState, outcome: StepOutcome | None = None) -> None:
        rec = state.to_record()
        if outcome is not None:
            rec["labels"] = [Label(int(x)).name for x in outcome.labels]
            rec["newly_compromised"] = sorted(outcome.newly_compromised)
            rec["evasions"] = outcome.attacker_evasion_count
        self.fh.write(json.dumps(rec, sort_keys=True) + "\n")
