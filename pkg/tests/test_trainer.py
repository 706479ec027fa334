import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsguard.autodiff import coord_mlp_spec, init_params, no_grad
from cpsguard.autodiff.nets import forward, softmax_np
from cpsguard.baselines import make_flat_config
from cpsguard.config import GAEConfig, Mode, PPOConfig, RunConfig
from cpsguard.env import ConfigError, EnvConfig, JointAction
from cpsguard.trainer import (
    AttackMixture,
    JointObservation,
    Policies,
    Role,
    RoleBatch,
    TrajectoryBuffer,
    compute_gae,
    episode_seeds,
    evaluate,
    gae,
    joint_log_prob,
    load_checkpoint,
    normalize_advantages,
    ppo_surrogate,
    rollout,
    stats_csv,
    train,
    update_role,
)
from cpsguard.autodiff import Adam

from oracles import gae_direct


def small_cfg(mode="hamarl", episodes=4, **env):
    e = dict(n_subsystems=4, episode_length=12)
    e.update(env)
    return RunConfig(
        env=EnvConfig(**e),
        ppo=PPOConfig(total_episodes=episodes, batch_episodes=2, minibatch_size=16, epochs_per_batch=2),
        mode=Mode.parse(mode),
        eval_episodes=3,
    ).validate()


# -- GAE ----------------------------------------------------------------------
def test_gae_zero_case_and_single_terminal():
    adv, ret = gae(np.zeros(5), np.zeros(5), [0, 0, 0, 0, 1], 0.0, 0.99, 0.95)
    assert not adv.any() and not ret.any()
    adv, _ = gae([1.0], [0.0], [1], 0.0, 0.99, 0.95)
    assert adv[0] == 1.0


def test_gae_example_against_direct_sum():
    adv, ret = gae([1, 0, 1], [0.5, 0.5, 0.5], [0, 0, 1], 0.0, 0.99, 0.95)
    ref = gae_direct([1, 0, 1], [0.5, 0.5, 0.5], 0.0, 0.99, 0.95, terminal=True)
    assert np.max(np.abs(adv - ref)) <= 1e-12
    assert np.allclose(ret, adv + 0.5)


def test_lambda_one_is_monte_carlo():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=20), rng.normal(size=20)
    adv, _ = gae(r, v, np.r_[np.zeros(19), 1], 0.0, 0.9, 1.0)
    mc = np.array([sum(0.9 ** k * r[t + k] for k in range(20 - t)) for t in range(20)])
    assert np.allclose(adv, mc - v, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.integers(0, 2**32 - 1), st.booleans())
def test_gae_matches_direct_sum(n, seed, terminal):
    rng = np.random.default_rng(seed)
    r, v, boot = rng.normal(size=n), rng.normal(size=n), float(rng.normal())
    dones = np.zeros(n)
    dones[-1] = terminal
    adv, _ = gae(r, v, dones, boot, 0.99, 0.95)
    assert np.max(np.abs(adv - gae_direct(r, v, boot, 0.99, 0.95, terminal))) <= 1e-12


def test_gae_carries_agent_axis():
    rng = np.random.default_rng(3)
    r, v = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
    boot = rng.normal(size=3)
    adv, _ = gae(r, v, np.zeros(10), boot, 0.99, 0.95)
    for i in range(3):
        solo, _ = gae(r[:, i], v[:, i], np.zeros(10), boot[i], 0.99, 0.95)
        assert np.allclose(adv[:, i], solo, atol=1e-14)


def test_buffer_and_errors():
    buf = TrajectoryBuffer()
    with pytest.raises(ValueError):
        compute_gae(buf, GAEConfig())
    for t in range(3):
        buf.append(np.zeros(2), 0, -1.0, 1.0, 0.0, t == 2)
    adv, ret = compute_gae(buf, GAEConfig())
    assert buf.advantages is adv and len(buf) == 3
    with pytest.raises(ConfigError):
        GAEConfig(gamma=1.0).validate()


# -- PPO pieces -------------------------------------------------------------------
def test_surrogate_examples():
    assert ppo_surrogate(1.5, 2.0, 0.2) == pytest.approx(2.4)
    assert ppo_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert ppo_surrogate(1.0, -3.7, 0.2) == -3.7
    with pytest.raises(ValueError):
        ppo_surrogate(1.0, 1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 5), st.floats(-10, 10), st.floats(0.01, 0.5))
def test_surrogate_is_pessimistic(rho, adv, eps):
    s = ppo_surrogate(rho, adv, eps)
    assert s <= rho * adv + 1e-12
    assert s <= np.clip(rho, 1 - eps, 1 + eps) * adv + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 500), st.integers(0, 2**32 - 1))
def test_advantage_normalisation(n, seed):
    a = np.random.default_rng(seed).normal(3.0, 5.0, size=n)
    z = normalize_advantages(a)
    assert abs(z.mean()) < 1e-9 and abs(z.var() - 1) < 1e-6


def _coord_role(seed=0):
    spec = coord_mlp_spec()
    params = init_params(spec, np.random.default_rng(seed))
    return Role("coord", spec, params, Adam(list(params), lr=1e-2))


def _probs(role, x):
    with no_grad():
        return softmax_np(forward(role.spec, role.params, x).logits.data)


def test_positive_advantage_raises_probability():
    # two samples on the same state so normalised advantages stay +1 / -1
    role = _coord_role()
    x = np.repeat(np.random.default_rng(1).normal(size=(1, 33)), 2, axis=0)
    p0 = _probs(role, x)[0]
    acts = np.array([2, 0])
    with no_grad():
        out = forward(role.spec, role.params, x)
    logp = np.log(softmax_np(out.logits.data))[np.arange(2), acts]
    batch = RoleBatch(x, acts, logp, np.array([1.0, -1.0]), out.value.data.copy())
    update_role(role, batch, PPOConfig(epochs_per_batch=1, minibatch_size=2, entropy_coef=0.0, lr=1e-2),
                np.random.default_rng(0))
    p1 = _probs(role, x)[0]
    assert p1[2] > p0[2] and p1[0] < p0[0]


def test_zero_advantage_leaves_policy_head_alone():
    role = _coord_role(3)
    x = np.random.default_rng(2).normal(size=(8, 33))
    with no_grad():
        out = forward(role.spec, role.params, x)
    acts = np.arange(8) % 4
    logp = np.log(softmax_np(out.logits.data))[np.arange(8), acts]
    before = role.params["pi.W"].data.copy()
    batch = RoleBatch(x, acts, logp, np.zeros(8), out.value.data + 1.0)
    update_role(role, batch, PPOConfig(epochs_per_batch=2, minibatch_size=4, entropy_coef=0.0),
                np.random.default_rng(0))
    assert np.array_equal(role.params["pi.W"].data, before)
    assert not np.array_equal(role.params["v.W"].data, _coord_role(3).params["v.W"].data)


# -- joint policy -------------------------------------------------------------------
def test_joint_log_prob_uniform_example():
    uni = lambda o: np.zeros(4)  # noqa: E731
    obs = JointObservation(local=[None, None], coordinator=None, attacker=None)
    ja = JointAction.make([1, 3], 2, -1, 0, 0)
    assert joint_log_prob([uni, uni], uni, uni, obs, ja) == pytest.approx(4 * np.log(0.25), abs=1e-12)


def test_joint_log_prob_deterministic_policies():
    onehot = lambda a: (lambda o: np.where(np.arange(4) == a, 0.0, -800.0))  # noqa: E731
    ja = JointAction.make([1, 3], 2, -1, 0, 0)
    obs = JointObservation(local=[None, None])
    lp = joint_log_prob([onehot(1), onehot(3)], onehot(2), onehot(0), obs, ja)
    assert abs(lp) < 1e-12


def test_joint_log_prob_requires_matching_observations():
    with pytest.raises(ValueError):
        joint_log_prob([lambda o: np.zeros(4)], None, None, JointObservation(local=[]),
                       JointAction.make([0]))


# -- rollouts and training ------------------------------------------------------------
def test_episode_seeds_are_fixed():
    a, ra = episode_seeds(42, 3)
    b, rb = episode_seeds(42, 3)
    assert a == b and ra.random() == rb.random()
    assert episode_seeds(42, 4)[0] != a


def test_rollout_grouping_does_not_matter():
    cfg = small_cfg()
    pol = Policies(cfg, 7)
    together = rollout(pol, cfg.env, 7, [0, 1, 2], collect=False)
    apart = [rollout(pol, cfg.env, 7, [i], collect=False).episodes[0] for i in range(3)]
    for x, y in zip(together.episodes, apart):
        assert x.ret == pytest.approx(y.ret, abs=1e-9)
        assert np.array_equal(x.comp_trace, y.comp_trace)


def test_rollout_batches_are_consistent():
    cfg = small_cfg()
    pol = Policies(cfg, 1)
    res = rollout(pol, cfg.env, 1, [0, 1])
    steps = sum(e.length for e in res.episodes)
    assert set(res.batches) == {"local", "coord", "attacker"}
    assert res.batches["local"].obs.shape == (steps, 4, 17)
    assert res.batches["coord"].obs.shape == (steps, 33)
    assert res.batches["attacker"].targets.shape == (steps,)
    assert np.all(res.batches["local"].log_probs <= 0)


@pytest.mark.parametrize("mode", ["hamarl", "flat", "single", "rule-based"])
def test_train_smoke_all_modes(mode, tmp_path):
    cfg = small_cfg(mode)
    res = train(cfg, 42, stats_path=str(tmp_path / "s.csv"), checkpoint_path=str(tmp_path / "c.ckpt"))
    assert len(res.stats) == 2 and res.episodes_done == 4
    el = [s.elapsed_s for s in res.stats]
    assert el == sorted(el)
    assert res.evaluation is not None and len(res.evaluation.rhos) == 3
    assert (tmp_path / "s.csv").read_text().count("\n") == 3
    if mode == "flat":
        assert res.policies.coord is None
    if mode == "rule-based":
        assert res.policies.rules is not None and res.policies.local is None


def test_flat_config_shim():
    assert make_flat_config(small_cfg()).mode is Mode.FLAT


def test_training_is_deterministic(tmp_path):
    cfg = small_cfg()
    train(cfg, 5, checkpoint_path=str(tmp_path / "a.ckpt"), evaluate_final=False)
    train(cfg, 5, checkpoint_path=str(tmp_path / "b.ckpt"), evaluate_final=False)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_resume_matches_uninterrupted(tmp_path):
    cfg = small_cfg(episodes=6)
    full = train(cfg, 9, checkpoint_path=str(tmp_path / "full.ckpt"), evaluate_final=False)
    part = train(cfg, 9, checkpoint_path=str(tmp_path / "part.ckpt"), evaluate_final=False, max_batches=1)
    assert part.episodes_done == 2
    rest = train(cfg, 9, resume=str(tmp_path / "part.ckpt"), checkpoint_path=str(tmp_path / "rest.ckpt"),
                 evaluate_final=False)
    assert rest.episodes_done == 6 and full.episodes_done == 6
    assert (tmp_path / "full.ckpt").read_bytes() == (tmp_path / "rest.ckpt").read_bytes()


def test_checkpoint_reload_gives_same_evaluation(tmp_path):
    cfg = small_cfg()
    res = train(cfg, 3, checkpoint_path=str(tmp_path / "c.ckpt"))
    pol, seed, done, _ = load_checkpoint(str(tmp_path / "c.ckpt"), cfg)
    again = evaluate(pol, seed, cfg.eval_episodes)
    assert again.metrics.row(seed, "x") == res.evaluation.metrics.row(seed, "x")
    with pytest.raises(Exception, match="mismatch"):
        load_checkpoint(str(tmp_path / "c.ckpt"), small_cfg(n_subsystems=5))


def test_scripted_dos_attacker_causes_downtime():
    cfg = small_cfg(p_dos_success=1.0)
    pol = Policies(cfg, 0)
    ev = evaluate(pol, 0, 2, mixture=AttackMixture.parse("all-dos"))
    assert sum(e.downtime for e in ev.episodes) > 0


def test_attack_mixture_parsing():
    m = AttackMixture.parse("weights:scan=1,dos=0")
    assert m.type_bias[2] < -1e8 and m.type_bias[0] == 0.0
    assert AttackMixture.parse(None) is None
    with pytest.raises(ConfigError):
        AttackMixture.parse("weights:foo=1")
    with pytest.raises(ConfigError):
        AttackMixture.parse("zergrush")


def test_stats_csv_header():
    cfg = small_cfg()
    res = train(cfg, 1, evaluate_final=False)
    text = stats_csv(res.stats)
    assert text.splitlines()[0].startswith("batch,episodes,elapsed_s")
