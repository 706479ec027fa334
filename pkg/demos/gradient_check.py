"""Compare autodiff gradients of a small PPO loss with central differences."""
import numpy as np

from cpsguard.autodiff import coord_mlp_spec, forward, init_params, no_grad
from cpsguard.config import PPOConfig
from cpsguard.trainer import _head, ppo_loss

rng = np.random.default_rng(0)
spec = coord_mlp_spec()
params = init_params(spec, rng)
x = rng.normal(size=(6, spec.in_dim))
acts, adv, ret = rng.integers(0, 4, 6), rng.normal(size=6), rng.normal(size=6)
old = np.log(np.full(6, 0.25))


def loss():
    out = forward(spec, params, x)
    logp, ent = _head(out.logits, acts)
    return ppo_loss(logp, ent, out.value, old, adv, ret, PPOConfig())[0]


params.zero_grad()
loss().backward()
p = params["fc0.W"]
for k in rng.choice(p.data.size, 5, replace=False):
    flat = p.data.reshape(-1)
    orig = flat[k]
    flat[k] = orig + 1e-5
    with no_grad():
        up = loss().item()
    flat[k] = orig - 1e-5
    with no_grad():
        dn = loss().item()
    flat[k] = orig
    print(f"coord {k:4d}: autodiff {p.grad.reshape(-1)[k]: .6e}  fd {(up - dn) / 2e-5: .6e}")
