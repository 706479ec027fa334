"""Policy/value networks built on the tensor engine.

Three architectures:

* ``LOCAL_GAT`` -- two graph-attention layers (4 heads, hidden 32, heads
  concatenated then linearly merged back to 32) run over each defender's ego
  graph; the centre node's final state is the agent embedding. Parameters are
  stacked along a leading agent axis so all defenders evaluate in one pass.
* ``COORD_MLP`` -- tanh MLP 64 -> 32 -> 16 over the pooled summary.
* ``ATTACKER_MLP`` -- tanh MLP with an attack-type head and a target head.

``JOINT_MLP`` is the single-agent baseline: one MLP over all observations
emitting one 4-way head per subsystem.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Param, Tensor


class NetKind(str, enum.Enum):
    LOCAL_GAT = "LOCAL_GAT"
    COORD_MLP = "COORD_MLP"
    ATTACKER_MLP = "ATTACKER_MLP"
    JOINT_MLP = "JOINT_MLP"


LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class NetworkSpec:
    kind: NetKind
    in_dim: int
    hidden: tuple[int, ...]
    n_actions: int
    heads: int = 1
    n_agents: int = 1  # LOCAL_GAT: stack size; JOINT_MLP: number of per-subsystem heads
    n_targets: int = 0  # ATTACKER_MLP target head width
    out_scale: float = 0.01  # init scale of the policy output layer

    def __post_init__(self):
        kind = NetKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is NetKind.LOCAL_GAT and (len(self.hidden) != 2 or self.heads < 1):
            raise ValueError("LOCAL_GAT needs exactly two hidden layers and >= 1 head")
        if kind is NetKind.ATTACKER_MLP and self.n_targets < 1:
            raise ValueError("ATTACKER_MLP needs n_targets >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "in_dim": self.in_dim,
            "hidden": list(self.hidden),
            "n_actions": self.n_actions,
            "heads": self.heads,
            "n_agents": self.n_agents,
            "n_targets": self.n_targets,
            "out_scale": self.out_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


def local_gat_spec(n_agents: int, in_dim: int = 17, n_actions: int = 4) -> NetworkSpec:
    return NetworkSpec(NetKind.LOCAL_GAT, in_dim, (32, 32), n_actions, heads=4, n_agents=n_agents)


def coord_mlp_spec(in_dim: int = 33, n_actions: int = 4) -> NetworkSpec:
    return NetworkSpec(NetKind.COORD_MLP, in_dim, (64, 32, 16), n_actions)


def attacker_mlp_spec(n_subsystems: int, n_types: int = 4) -> NetworkSpec:
    return NetworkSpec(
        NetKind.ATTACKER_MLP, 4 * n_subsystems + 1, (64, 32), n_types, n_targets=n_subsystems
    )


def joint_mlp_spec(n_subsystems: int, obs_dim: int = 17, n_actions: int = 4) -> NetworkSpec:
    return NetworkSpec(
        NetKind.JOINT_MLP, n_subsystems * obs_dim, (64, 32), n_actions, n_agents=n_subsystems
    )


class ParamSet:
    """Named parameter tensors in a fixed order."""

    def __init__(self, params: dict[str, Param]):
        self.params = params

    def __getitem__(self, name: str) -> Param:
        return self.params[name]

    def __iter__(self) -> Iterator[Param]:
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad[...] = 0.0

    def agent_view(self, i: int) -> "ParamSet":
        """Writable views of agent ``i``'s slice of stacked parameters."""
        return ParamSet(
            {n: Param(p.data[i : i + 1], n, grad=p.grad[i : i + 1]) for n, p in self.params.items()}
        )

    def copy(self) -> "ParamSet":
        return ParamSet({n: Param(p.data.copy(), n) for n, p in self.params.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params.values()])

    def n_values(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int, scale: float = 1.0):
    limit = np.sqrt(6.0 / (fan_in + fan_out)) * scale
    return rng.uniform(-limit, limit, size=shape)


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> ParamSet:
    """Seeded Glorot-uniform weights, zero biases."""
    p: dict[str, np.ndarray] = {}
    if spec.kind is NetKind.LOCAL_GAT:
        A, K = spec.n_agents, spec.heads
        f_in = spec.in_dim
        for layer, hid in enumerate(spec.hidden):
            # head k occupies columns k*hid:(k+1)*hid
            p[f"gat{layer}.W"] = _glorot(rng, (A, f_in, K * hid), f_in, hid)
            p[f"gat{layer}.a_src"] = _glorot(rng, (A, K, hid), hid, 1)
            p[f"gat{layer}.a_dst"] = _glorot(rng, (A, K, hid), hid, 1)
            p[f"gat{layer}.merge"] = _glorot(rng, (A, K * hid, hid), K * hid, hid)
            p[f"gat{layer}.b"] = np.zeros((A, 1, 1, hid))
            f_in = hid
        p["pi.W"] = _glorot(rng, (A, f_in, spec.n_actions), f_in, spec.n_actions, spec.out_scale)
        p["pi.b"] = np.zeros((A, 1, spec.n_actions))
        p["v.W"] = _glorot(rng, (A, f_in, 1), f_in, 1)
        p["v.b"] = np.zeros((A, 1, 1))
    else:
        f_in = spec.in_dim
        for layer, hid in enumerate(spec.hidden):
            p[f"fc{layer}.W"] = _glorot(rng, (f_in, hid), f_in, hid)
            p[f"fc{layer}.b"] = np.zeros((1, hid))
            f_in = hid
        n_out = spec.n_actions * (spec.n_agents if spec.kind is NetKind.JOINT_MLP else 1)
        p["pi.W"] = _glorot(rng, (f_in, n_out), f_in, n_out, spec.out_scale)
        p["pi.b"] = np.zeros((1, n_out))
        if spec.kind is NetKind.ATTACKER_MLP:
            p["target.W"] = _glorot(rng, (f_in, spec.n_targets), f_in, spec.n_targets, spec.out_scale)
            p["target.b"] = np.zeros((1, spec.n_targets))
        p["v.W"] = _glorot(rng, (f_in, 1), f_in, 1)
        p["v.b"] = np.zeros((1, 1))
    return ParamSet({name: Param(arr, name) for name, arr in p.items()})


@dataclass
class PolicyOutput:
    """Network output. ``logits`` last axis indexes actions; ``value`` is V(s).

    Shapes: LOCAL_GAT logits (A, B, n_actions), value (A, B), embedding (A, B, hidden);
    MLP kinds logits (B, n_actions), value (B,). JOINT_MLP logits (B, n_heads, n_actions).
    """

    logits: Tensor
    value: Tensor
    embedding: Tensor | None = None
    target_logits: Tensor | None = None
    attention: list = field(default_factory=list)


def _score_matrix(a: Tensor, K: int, H: int) -> Tensor:
    """Spread per-head scoring vectors (A, K, H) into a block matrix (A, K*H, K)."""
    A = a.shape[0]
    block = np.kron(np.eye(K), np.ones((H, 1)))  # (K*H, K)
    return T.reshape(a, (A, K * H, 1)) * block


def gat_layer(
    x: Tensor,
    W: Tensor,
    a_src: Tensor,
    a_dst: Tensor,
    merge: Tensor,
    b: Tensor,
    adj: np.ndarray,
    centre_only: bool = False,
) -> tuple[Tensor, Tensor]:
    """One multi-head attention layer over padded ego graphs.

    x: (A, B, M, F) node features; adj: (A, M, M) bool, ``adj[a, i, j]`` means
    node i attends to node j (self loops included). Returns new node states
    (A, B, M', H) and attention weights (A, B, K, M', M), where M' = 1 when
    ``centre_only`` (only node 0 is updated) and M otherwise.
    """
    A, B, M, F = x.shape
    K, H = a_src.shape[1], a_src.shape[2]
    z = T.matmul(T.reshape(x, (A, B * M, F)), W)  # (A, B*M, K*H)
    s_src = T.matmul(z, _score_matrix(a_src, K, H))  # (A, B*M, K)
    s_dst = T.matmul(z, _score_matrix(a_dst, K, H))
    s_src = T.transpose(T.reshape(s_src, (A, B, M, K)), (0, 1, 3, 2))  # (A, B, K, M)
    s_dst = T.transpose(T.reshape(s_dst, (A, B, M, K)), (0, 1, 3, 2))
    rows = M
    mask = adj
    if centre_only:
        s_dst = s_dst[:, :, :, 0:1]
        rows = 1
        mask = adj[:, 0:1, :]
    scores = T.leaky_relu(
        T.reshape(s_dst, (A, B, K, rows, 1)) + T.reshape(s_src, (A, B, K, 1, M)), LEAKY_SLOPE
    )
    alpha = T.masked_softmax(scores, np.broadcast_to(mask[:, None, None, :, :], scores.shape))
    zh = T.transpose(T.reshape(z, (A, B, M, K, H)), (0, 1, 3, 2, 4))  # (A, B, K, M, H)
    heads = T.matmul(alpha, zh)  # (A, B, K, rows, H)
    cat = T.reshape(T.transpose(heads, (0, 1, 3, 2, 4)), (A, B * rows, K * H))
    merged = T.reshape(T.matmul(cat, merge), (A, B, rows, H))
    return T.tanh(merged + b), alpha


def forward(spec: NetworkSpec, params: ParamSet, x, adj: np.ndarray | None = None) -> PolicyOutput:
    """Evaluate a network.

    LOCAL_GAT: ``x`` is (A, B, M, F) ego-graph node features with the agent's own
    node at index 0, ``adj`` (A, M, M). Other kinds: ``x`` is (B, in_dim).
    """
    x = T.as_tensor(x)
    if spec.kind is NetKind.LOCAL_GAT:
        if adj is None:
            raise ValueError("LOCAL_GAT forward needs an adjacency mask")
        if x.ndim != 4 or x.shape[-1] != spec.in_dim:
            raise ValueError(f"expected (A, B, M, {spec.in_dim}) node features, got {x.shape}")
        A = params["pi.W"].shape[0]
        if x.shape[0] != A or adj.shape != (A, x.shape[2], x.shape[2]):
            raise ValueError(f"agent axis mismatch: params {A}, input {x.shape}, adj {adj.shape}")
        h = x
        attn = []
        n_layers = len(spec.hidden)
        for layer in range(n_layers):
            h, alpha = gat_layer(
                h,
                params[f"gat{layer}.W"],
                params[f"gat{layer}.a_src"],
                params[f"gat{layer}.a_dst"],
                params[f"gat{layer}.merge"],
                params[f"gat{layer}.b"],
                adj,
                centre_only=layer == n_layers - 1,
            )
            attn.append(alpha)
        emb = T.reshape(h, (h.shape[0], h.shape[1], h.shape[3]))  # centre node, (A, B, H)
        logits = T.matmul(emb, params["pi.W"]) + params["pi.b"]
        value = T.matmul(emb, params["v.W"]) + params["v.b"]
        Av, Bv = value.shape[0], value.shape[1]
        return PolicyOutput(logits, T.reshape(value, (Av, Bv)), emb, attention=attn)

    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValueError(f"expected (B, {spec.in_dim}) input, got {x.shape}")
    h = x
    for layer in range(len(spec.hidden)):
        h = T.tanh(T.matmul(h, params[f"fc{layer}.W"]) + params[f"fc{layer}.b"])
    logits = T.matmul(h, params["pi.W"]) + params["pi.b"]
    value = T.reshape(T.matmul(h, params["v.W"]) + params["v.b"], (x.shape[0],))
    target_logits = None
    if spec.kind is NetKind.ATTACKER_MLP:
        target_logits = T.matmul(h, params["target.W"]) + params["target.b"]
    elif spec.kind is NetKind.JOINT_MLP:
        logits = T.reshape(logits, (x.shape[0], spec.n_agents, spec.n_actions))
    return PolicyOutput(logits, value, h, target_logits=target_logits)


def softmax_np(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    x = logits if mask is None else np.where(mask, logits, -np.inf)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    x = logits if mask is None else np.where(mask, logits, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def sample_action(logits: np.ndarray, rng: np.random.Generator, mask: np.ndarray | None = None):
    """Categorical draw over the last axis by inverse CDF.

    Returns ``(actions, log_probs)`` with the leading shape of ``logits``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise T.NonFiniteError("non-finite logits")
    logp = log_softmax_np(logits, mask)
    probs = np.exp(logp)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(logits.shape[:-1])[..., None] * cdf[..., -1:]
    actions = (u >= cdf).sum(axis=-1)
    actions = np.minimum(actions, logits.shape[-1] - 1)
    if mask is not None:
        # guard against landing on a zero-probability slot through rounding
        bad = ~np.take_along_axis(np.broadcast_to(mask, logits.shape), actions[..., None], -1)[..., 0]
        if bad.any():
            actions = np.where(bad, np.argmax(logp, axis=-1), actions)
    lp = np.take_along_axis(logp, actions[..., None], axis=-1)[..., 0]
    if np.ndim(actions) == 0:
        return int(actions), float(lp)
    return actions.astype(np.int64), lp
