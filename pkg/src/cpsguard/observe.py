"""Partial views of the plant: per-defender, pooled coordinator summary, attacker."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import N_CHANNELS, N_NET, EnvState

LOCAL_DIM = N_CHANNELS + N_NET  # 17
SUMMARY_DIM = 32
EMBED_DIM = 32
COORD_DIM = SUMMARY_DIM + 1  # pooled summary + fraction of subsystems alerting
_PROJECTION_SEED = 20_251_031
QUANT_SCALE = 32767.0


@dataclass(frozen=True)
class LocalObservation:
    sensors: np.ndarray  # (12,)
    net: np.ndarray  # (5,)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.sensors, self.net])


@dataclass(frozen=True)
class GlobalSummary:
    pooled: np.ndarray  # (32,)


@dataclass(frozen=True)
class AttackerObservation:
    revealed: np.ndarray
    quarantined: np.ndarray  # only meaningful where revealed
    responsive: np.ndarray
    owned: np.ndarray
    last_success: bool

    def vector(self) -> np.ndarray:
        return np.concatenate([
            self.revealed, self.quarantined, self.responsive, self.owned, [float(self.last_success)]
        ]).astype(np.float64)


def observe_local(state: EnvState, agent: int) -> LocalObservation:
    if not 0 <= agent < state.n:
        raise IndexError(f"agent {agent} out of range for {state.n} subsystems")
    return LocalObservation(state.sensors[agent].copy(), state.net_stats[agent].copy())


def observe_all(state: EnvState) -> np.ndarray:
    """Every defender's observation stacked, shape (N, 17)."""
    return np.concatenate([state.sensors, state.net_stats], axis=1)


def observe_attacker(state: EnvState) -> AttackerObservation:
    rev = state.revealed
    quarantined = rev & (state.quarantine_left > 0)
    responsive = rev & (state.quarantine_left == 0) & (state.dos_left == 0)
    owned = rev & state.compromised
    return AttackerObservation(
        revealed=rev.astype(np.float64),
        quarantined=quarantined.astype(np.float64),
        responsive=responsive.astype(np.float64),
        owned=owned.astype(np.float64),
        last_success=bool(state.last_attack_success),
    )


@dataclass(frozen=True)
class EgoGraphs:
    """Padded neighbourhoods: defender i sees its own node (slot 0) plus topology neighbours.

    ``index`` (N, M) holds subsystem ids, -1 for padding; ``adj`` (N, M, M) is the
    attention mask; ``feature_mask`` (N, M, 17) hides neighbours' sensor channels so
    only their public network statistics pass through.
    """

    index: np.ndarray
    adj: np.ndarray
    feature_mask: np.ndarray

    @property
    def max_nodes(self) -> int:
        return self.index.shape[1]


def build_ego_graphs(topology: list[list[int]]) -> EgoGraphs:
    n = len(topology)
    m = 1 + max((len(nb) for nb in topology), default=0)
    index = np.full((n, m), -1, dtype=np.int64)
    adj = np.zeros((n, m, m), dtype=bool)
    fmask = np.zeros((n, m, LOCAL_DIM))
    for i, nbrs in enumerate(topology):
        nodes = [i] + list(nbrs)
        index[i, : len(nodes)] = nodes
        for a, u in enumerate(nodes):
            adj[i, a, a] = True
            for b, v in enumerate(nodes):
                if v in topology[u]:
                    adj[i, a, b] = True
        for pad in range(len(nodes), m):
            adj[i, pad, pad] = True
        fmask[i, 0, :] = 1.0
        fmask[i, 1 : len(nodes), N_CHANNELS:] = 1.0
    return EgoGraphs(index, adj, fmask)


def ego_features(obs: np.ndarray, ego: EgoGraphs) -> np.ndarray:
    """Node features (N, M, 17) for every defender's ego graph from stacked observations."""
    return obs[np.maximum(ego.index, 0)] * ego.feature_mask


def projection_matrix(dim_in: int = EMBED_DIM, dim_out: int = SUMMARY_DIM) -> np.ndarray:
    """Fixed (untrained) orthonormal-column projection used after pooling."""
    rng = np.random.Generator(np.random.PCG64(_PROJECTION_SEED))
    q, _ = np.linalg.qr(rng.normal(size=(max(dim_in, dim_out), max(dim_in, dim_out))))
    return q[:dim_in, :dim_out].copy()


_PROJ = projection_matrix()


def quantize(embeddings: np.ndarray) -> np.ndarray:
    """16-bit fixed point encoding of embeddings in [-1, 1] for the agent->coordinator link."""
    return np.round(np.clip(embeddings, -1.0, 1.0) * QUANT_SCALE).astype(np.int16)


def dequantize(codes: np.ndarray) -> np.ndarray:
    return codes.astype(np.float64) / QUANT_SCALE


def aggregate_global(embeddings) -> GlobalSummary:
    """Mean-pool per-agent embeddings then apply the fixed projection to 32 dims."""
    if isinstance(embeddings, (list, tuple)):
        if len(embeddings) == 0:
            raise ValueError("aggregate_global needs at least one embedding")
        dims = {np.shape(e) for e in embeddings}
        if len(dims) != 1:
            raise ValueError(f"ragged embeddings: {sorted(dims)}")
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] == 0:
        raise ValueError("aggregate_global needs a non-empty (n_agents, d) array of embeddings")
    proj = _PROJ if e.shape[1] == EMBED_DIM else projection_matrix(e.shape[1])
    return GlobalSummary(e.mean(axis=0) @ proj)


def coordinator_input(embeddings: np.ndarray, alerts: np.ndarray) -> np.ndarray:
    """Coordinator features: pooled summary of dequantised embeddings plus alert fraction.

    ``embeddings`` (..., N, d) and ``alerts`` (..., N); leading axes are batch axes.
    """
    received = dequantize(quantize(embeddings))
    pooled = received.mean(axis=-2) @ (_PROJ if received.shape[-1] == EMBED_DIM
                                       else projection_matrix(received.shape[-1]))
    frac = np.asarray(alerts, dtype=np.float64).mean(axis=-1, keepdims=True)
    return np.concatenate([pooled, frac], axis=-1)
