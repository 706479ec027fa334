"""Train, evaluate, benchmark and report through the command line entry point."""
import tempfile
from pathlib import Path

from cpsguard.config import PPOConfig, RunConfig, save_run_config
from cpsguard.env import EnvConfig
from cpsguard.harness import main

work = Path(tempfile.mkdtemp())
cfg = RunConfig(env=EnvConfig(n_subsystems=4, episode_length=30), ppo=PPOConfig(total_episodes=16, batch_episodes=8),
                eval_episodes=4)
save_run_config(work / "tiny.ini", cfg)
conf = str(work / "tiny.ini")
for mode in ("hamarl", "flat", "rule-based"):
    main(["train", "--config", conf, "--mode", mode, "--seed", "1", "--seed", "2", "--out", str(work / mode)])
main(["eval", str(work / "hamarl/checkpoints/hamarl_seed1.ckpt"), "--holdout", "all-dos", "--out", str(work / "dos")])
main(["bench-scaling", "--config", conf, "--agents", "4,6", "--episodes", "8", "--out", str(work / "scale")])
print((work / "scale" / "scaling.csv").read_text())
main(["report", *(str(work / m) for m in ("hamarl", "flat", "rule-based")), "--out", str(work / "report")])
print("artifacts in", work)
