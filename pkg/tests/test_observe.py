import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsguard.env import AttackType, EnvConfig, JointAction, force_compromise, reset, step
from cpsguard.observe import (
    COORD_DIM,
    LOCAL_DIM,
    SUMMARY_DIM,
    aggregate_global,
    build_ego_graphs,
    coordinator_input,
    dequantize,
    ego_features,
    observe_all,
    observe_attacker,
    observe_local,
    projection_matrix,
    quantize,
)


def test_local_observation_shape_and_purity():
    s = reset(EnvConfig(), 42)
    o1, o2 = observe_local(s, 3), observe_local(s, 3)
    assert o1.vector().shape == (LOCAL_DIM,)
    assert np.array_equal(o1.vector(), o2.vector())
    assert o1.net[2] == 0.0  # no traffic before the first step
    assert np.array_equal(observe_all(s)[3], o1.vector())
    with pytest.raises(IndexError):
        observe_local(s, 8)


def test_dos_saturates_loss_feature():
    s = reset(EnvConfig(p_dos_success=1.0), 0)
    s.revealed[1] = True
    s, _ = step(s, JointAction.make(np.zeros(8), attack=AttackType.DOS, attack_target=1))
    assert observe_local(s, 1).net[0] == 1.0


def test_tampered_subsystem_shows_residual():
    s = reset(EnvConfig(p_tamper_success=1.0), 0)
    s.revealed[2] = True
    s, _ = step(s, JointAction.make(np.zeros(8), attack=AttackType.TAMPER, attack_target=2))
    res = observe_all(s)[:, 12 + 3]
    assert res[2] > 0.3 and np.delete(res, 2).max() < 0.15


def test_attacker_view_starts_blank_and_scan_reveals():
    s = reset(EnvConfig(p_scan_reveal=1.0), 0)
    ob = observe_attacker(s)
    assert not ob.revealed.any() and ob.vector().shape == (4 * 8 + 1,)
    s, _ = step(s, JointAction.make(np.zeros(8), attack=AttackType.SCAN, attack_target=3))
    ob = observe_attacker(s)
    assert ob.revealed[3] == 1.0 and ob.last_success


def test_quarantined_revealed_node_not_responsive():
    s = reset(EnvConfig(), 0)
    s.revealed[4] = True
    s.quarantine_left[4] = 2
    ob = observe_attacker(s)
    assert ob.quarantined[4] == 1.0 and ob.responsive[4] == 0.0


def test_attacker_cannot_see_unrevealed_compromise():
    a = reset(EnvConfig(), 5)
    b = reset(EnvConfig(), 5)
    b.compromised[6] = True  # unrevealed
    assert np.array_equal(observe_attacker(a).vector(), observe_attacker(b).vector())
    force_compromise(b, [6])  # now revealed
    assert not np.array_equal(observe_attacker(a).vector(), observe_attacker(b).vector())


def test_aggregate_examples():
    rng = np.random.default_rng(0)
    e = rng.normal(size=32)
    P = projection_matrix()
    assert np.allclose(aggregate_global([e] * 5).pooled, e @ P, atol=1e-12)
    assert np.allclose(aggregate_global([e, -e]).pooled, 0.0, atol=1e-12)
    assert aggregate_global(rng.normal(size=(3, 32))).pooled.shape == (SUMMARY_DIM,)


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate_global([])
    with pytest.raises(ValueError, match="ragged"):
        aggregate_global([np.zeros(32), np.zeros(16)])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 24), st.integers(0, 2**32 - 1))
def test_aggregate_permutation_invariant(n, seed):
    rng = np.random.default_rng(seed)
    E = rng.normal(size=(n, 32))
    perm = rng.permutation(n)
    a, b = aggregate_global(E).pooled, aggregate_global(E[perm]).pooled
    assert a.shape == (32,)
    assert np.allclose(a, b, atol=1e-12)


def test_projection_is_orthonormal_and_fixed():
    P = projection_matrix()
    assert np.allclose(P.T @ P, np.eye(32), atol=1e-12)
    assert np.array_equal(P, projection_matrix())


def test_quantization_round_trip_error_bounded():
    x = np.linspace(-1, 1, 1001)
    q = quantize(x)
    assert q.dtype == np.int16
    assert np.max(np.abs(dequantize(q) - x)) <= 0.5 / 32767 + 1e-15


def test_coordinator_input_layout():
    rng = np.random.default_rng(1)
    emb = rng.uniform(-1, 1, size=(5, 8, 32))
    alerts = np.zeros((5, 8))
    alerts[:, :2] = 1
    c = coordinator_input(emb, alerts)
    assert c.shape == (5, COORD_DIM)
    assert np.allclose(c[:, -1], 0.25)
    assert np.allclose(c[0, :32], aggregate_global(dequantize(quantize(emb[0]))).pooled)


def test_ego_graph_masks_neighbour_sensors():
    cfg = EnvConfig()
    ego = build_ego_graphs(cfg.topology)
    assert ego.max_nodes == 4
    assert list(ego.index[0]) == [0, 1, 4, 7]
    assert list(ego.index[1]) == [1, 0, 2, -1]
    s = reset(cfg, 0)
    x = ego_features(observe_all(s), ego)
    assert x.shape == (8, 4, LOCAL_DIM)
    assert np.array_equal(x[0, 0], observe_all(s)[0])
    assert not x[0, 1, :12].any() and np.array_equal(x[0, 1, 12:], observe_all(s)[1, 12:])
    assert not x[1, 3].any()  # padding row
    # every node attends at least to itself
    assert all(ego.adj[i, m, m] for i in range(8) for m in range(4))
