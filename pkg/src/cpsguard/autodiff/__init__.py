from .tensor import GraphError, NonFiniteError, Param, Tensor, no_grad
from .nets import (
    NetKind,
    NetworkSpec,
    ParamSet,
    PolicyOutput,
    attacker_mlp_spec,
    coord_mlp_spec,
    forward,
    init_params,
    joint_mlp_spec,
    local_gat_spec,
    sample_action,
)
from .optim import Adam, adam_step, learning_rate

__all__ = [
    "Adam",
    "GraphError",
    "NetKind",
    "NetworkSpec",
    "NonFiniteError",
    "Param",
    "ParamSet",
    "PolicyOutput",
    "Tensor",
    "adam_step",
    "attacker_mlp_spec",
    "coord_mlp_spec",
    "forward",
    "init_params",
    "joint_mlp_spec",
    "learning_rate",
    "local_gat_spec",
    "no_grad",
    "sample_action",
]
