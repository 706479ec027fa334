"""Hierarchical adversarial multi-agent defence of a simulated cyber-physical plant."""
from .config import GAEConfig, Mode, PPOConfig, RuleConfig, RunConfig
from .env import EnvConfig, reset, step

__version__ = "0.1.0"

__all__ = ["EnvConfig", "GAEConfig", "Mode", "PPOConfig", "RuleConfig", "RunConfig", "reset", "step"]
