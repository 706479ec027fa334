"""Experiment runner behind the ``cpsguard`` command line.

Every command writes plain files into an output directory:

* ``train``          metrics.csv, resilience.json, stats_<mode>_seed<N>.csv,
                     checkpoints/<mode>_seed<N>.ckpt, config.ini (and rules.ini for
                     the rule-based defender)
* ``eval``           metrics.csv, resilience.json
* ``bench-scaling``  scaling.csv
* ``report``         report.json, report.txt
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff.checkpoint import CheckpointError
from .config import Mode, RunConfig, load_run_config, run_config_to_text, rule_config_to_text
from .env import AttackType, ConfigError, EnvConfig
from .metrics import CSV_COLUMNS, check_eps_delta, compute_resilience, metrics_csv, parse_metrics_csv
from .trainer import AttackMixture, TrainingError, evaluate, load_checkpoint, train

DEFAULT_SEEDS = (42, 100, 2025)
DEFAULT_AGENTS = (4, 8, 12, 24)
SCALING_EPISODES = 500
SCALING_COLUMNS = ("mode", "agents", "episodes", "seconds", "hours")
# (eps, delta) used for the resilience verdict in resilience.json
RESILIENCE_EPS, RESILIENCE_DELTA = 0.5, 0.1


class HarnessError(RuntimeError):
    """Failure with a category used for the CLI error line."""

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


@dataclass
class ExperimentSpec:
    mode: Mode = Mode.HAMARL
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    episodes: int | None = None
    agent_counts: list[int] = field(default_factory=lambda: list(DEFAULT_AGENTS))
    out: str = "runs"
    holdout: str | None = None
    config_path: str | None = None

    def validate(self) -> "ExperimentSpec":
        if not self.seeds:
            raise HarnessError("config", "at least one --seed is required")
        if self.episodes is not None and self.episodes < 1:
            raise HarnessError("config", "--episodes must be >= 1")
        if any(b <= a for a, b in zip(self.agent_counts, self.agent_counts[1:])) or \
                any(a < 1 for a in self.agent_counts):
            raise HarnessError("config", f"agent counts must be positive and strictly increasing, "
                                         f"got {self.agent_counts}")
        return self


@dataclass
class RunArtifact:
    config: str
    checkpoints: list[str]
    metrics_csv: str
    resilience_json: str
    wall_clock: dict[int, float]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def _out_dir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
        probe = p / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise HarnessError("io", f"output directory {path!r} is not writable: {exc}") from exc
    return p


def base_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        return load_run_config(path)
    except OSError as exc:
        raise HarnessError("io", f"cannot read config {path!r}: {exc}") from exc


def _holdout_type(name: str | None) -> str | None:
    if name is None:
        return None
    key = name.strip().upper()
    if key not in AttackType.__members__:
        return None
    return key


def configure(base: RunConfig, mode: Mode, episodes: int | None = None, agents: int | None = None,
              holdout: str | None = None) -> RunConfig:
    """Derive the run config for one cell: mode, episode budget, size and withheld attack type."""
    env = base.env
    if agents is not None and agents != env.n_subsystems:
        # topology and entry nodes follow the size unless pinned by the config
        env = dataclasses.replace(env, n_subsystems=agents, topology=None, entry_nodes=None)
    held = _holdout_type(holdout)
    if holdout is not None and held is None:
        raise HarnessError("config", f"--holdout for train must name an attack type, got {holdout!r}")
    if held is not None:
        kept = tuple(a for a in env.attack_types if a != held)
        if not kept:
            raise HarnessError("config", f"withholding {held} leaves no attack types")
        env = dataclasses.replace(env, attack_types=kept)
    ppo = base.ppo if episodes is None else dataclasses.replace(base.ppo, total_episodes=episodes)
    try:
        return dataclasses.replace(base, env=env, ppo=ppo, mode=mode).validate()
    except ConfigError as exc:
        raise HarnessError("config", str(exc)) from exc


def resilience_record(result) -> dict:
    """Per-seed resilience block: episode ratios, mean frequencies and the (eps, delta) verdict."""
    freq = np.mean([compute_resilience(ep.comp_trace).freq for ep in result.episodes], axis=0)
    verdict = check_eps_delta(result.rhos, RESILIENCE_EPS, RESILIENCE_DELTA)
    return {
        "episodes": len(result.rhos),
        "rho": [float(r) for r in result.rhos],
        "mean_rho": result.mean_rho,
        "max_rho": float(max(result.rhos)),
        "mean_freq": [float(f) for f in freq],
        "eps": RESILIENCE_EPS,
        "delta": RESILIENCE_DELTA,
        "eps_delta_fraction": verdict.fraction,
        "eps_delta_passed": verdict.passed,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_train(spec: ExperimentSpec, progress=None) -> RunArtifact:
    spec.validate()
    out = _out_dir(spec.out)
    (out / "checkpoints").mkdir(exist_ok=True)
    cfg = configure(base_config(spec.config_path), spec.mode, spec.episodes, holdout=spec.holdout)
    (out / "config.ini").write_text(run_config_to_text(cfg))
    rows, resil, ckpts, wall = [], {}, [], {}
    for seed in spec.seeds:
        tag = f"{cfg.mode.value}_seed{seed}"
        ck = out / "checkpoints" / f"{tag}.ckpt"
        try:
            res = train(cfg, seed, checkpoint_path=str(ck), stats_path=str(out / f"stats_{tag}.csv"),
                        progress=progress)
        except (TrainingError, FloatingPointError) as exc:
            raise HarnessError("training", f"seed {seed}: {exc}") from exc
        if res.policies.rules is not None:
            (out / "rules.ini").write_text(rule_config_to_text(res.policies.rules))
        rows.append(res.evaluation.metrics.row(seed, cfg.mode.value))
        resil[str(seed)] = resilience_record(res.evaluation)
        ckpts.append(str(ck))
        wall[seed] = res.wall_clock
    (out / "metrics.csv").write_text(metrics_csv(rows))
    _write_json(out / "resilience.json", {"mode": cfg.mode.value, "holdout": spec.holdout, "seeds": resil})
    return RunArtifact(str(out / "config.ini"), ckpts, str(out / "metrics.csv"),
                       str(out / "resilience.json"), wall)


def eval_mixture(env: EnvConfig, holdout: str | None) -> tuple[EnvConfig, AttackMixture | None]:
    """Evaluation environment and attacker change for ``--holdout``.

    An attack type name re-enables that type; anything else is parsed as an
    attack mixture (``all-dos`` or ``weights:SCAN=1,...``).
    """
    if holdout is None:
        return env, None
    held = _holdout_type(holdout)
    if held is not None:
        types = tuple(a.name for a in AttackType if a.name in env.attack_types or a.name == held)
        return dataclasses.replace(env, attack_types=types), None
    try:
        return env, AttackMixture.parse(holdout)
    except ConfigError as exc:
        raise HarnessError("config", str(exc)) from exc


def cmd_eval(checkpoint: str, episodes: int | None = None, holdout: str | None = None,
             out: str = "eval", config_path: str | None = None, seed: int | None = None):
    """Frozen-policy evaluation of one checkpoint. Returns (MetricsReport, EvalResult)."""
    outp = _out_dir(out)
    cfg = base_config(config_path) if config_path is not None else None
    try:
        pol, ck_seed, _, _ = load_checkpoint(checkpoint, cfg)
    except CheckpointError as exc:
        raise HarnessError("checkpoint", str(exc)) from exc
    seed = ck_seed if seed is None else seed
    env, mixture = eval_mixture(pol.cfg.env, holdout)
    n_eps = pol.cfg.eval_episodes if episodes is None else episodes
    res = evaluate(pol, seed, n_eps, env_cfg=env, mixture=mixture)
    (outp / "metrics.csv").write_text(metrics_csv([res.metrics.row(seed, pol.mode.value)]))
    _write_json(outp / "resilience.json", {
        "mode": pol.mode.value, "holdout": holdout, "checkpoint": os.path.basename(checkpoint),
        "downtime": int(sum(ep.downtime for ep in res.episodes)),
        "seeds": {str(seed): resilience_record(res)},
    })
    return res.metrics, res


def bench_scaling(base: RunConfig, agent_counts: Sequence[int], episodes: int, seed: int = 42,
                  modes: Sequence[Mode] = (Mode.HAMARL, Mode.FLAT)) -> list[dict]:
    """Training wall-clock per (mode, agent count); evaluation and file output excluded."""
    rows = []
    for mode in modes:
        for n in agent_counts:
            cfg = configure(base, mode, episodes, agents=n)
            res = train(cfg, seed, evaluate_final=False)
            rows.append({"mode": mode.value, "agents": n, "episodes": episodes,
                         "seconds": res.wall_clock, "hours": res.wall_clock / 3600.0})
    return rows


def scaling_csv(rows: Sequence[dict]) -> str:
    lines = [",".join(SCALING_COLUMNS)]
    for r in rows:
        lines.append(f"{r['mode']},{r['agents']},{r['episodes']},{r['seconds']:.6f},{r['hours']:.9f}")
    return "\n".join(lines) + "\n"


def parse_scaling_csv(text: str) -> list[dict]:
    lines = text.strip().splitlines()
    if not lines or tuple(lines[0].split(",")) != SCALING_COLUMNS:
        raise ValueError("scaling CSV header mismatch")
    out = []
    for ln in lines[1:]:
        m, a, e, s, h = ln.split(",")
        out.append({"mode": m, "agents": int(a), "episodes": int(e), "seconds": float(s), "hours": float(h)})
    return out


def cmd_bench_scaling(spec: ExperimentSpec) -> list[dict]:
    spec.validate()
    out = _out_dir(spec.out)
    episodes = SCALING_EPISODES if spec.episodes is None else spec.episodes
    rows = bench_scaling(base_config(spec.config_path), spec.agent_counts, episodes, spec.seeds[0])
    (out / "scaling.csv").write_text(scaling_csv(rows))
    return rows


# metric -> True when larger is better
REPORT_METRICS = {"return": True, "f1": True, "precision": True, "recall": True, "far": False,
                  "mttd": False, "accuracy": True}


def build_report(rows: Sequence[dict]) -> dict:
    """Table of per-seed rows with best-value flags.

    ``best`` marks, per metric, the best row over the whole table (lowest seed
    wins ties, then input order). ``best_f1`` marks exactly one row per seed.
    """
    if not rows:
        raise HarnessError("input", "report needs at least one metrics row")
    table = [dict(r) for r in rows]
    for r in table:
        r["best"] = []
    order = sorted(range(len(table)), key=lambda i: (table[i]["seed"], i))
    for metric, larger in REPORT_METRICS.items():
        best, best_val = None, None
        for i in order:
            v = table[i].get(metric)
            if v is None:
                continue
            if best_val is None or (v > best_val if larger else v < best_val):
                best, best_val = i, v
        if best is not None:
            table[best]["best"].append(metric)
    for seed in sorted({r["seed"] for r in table}):
        idx = [i for i in range(len(table)) if table[i]["seed"] == seed]
        win = max(idx, key=lambda i: (table[i]["f1"] if table[i]["f1"] is not None else -1.0, -i))
        for i in idx:
            table[i]["best_f1"] = i == win
    return {"columns": list(CSV_COLUMNS), "rows": table}


def report_text(report: dict) -> str:
    cols = report["columns"]
    lines = ["  ".join(f"{c:>9}" for c in cols) + "  best_f1"]
    for r in report["rows"]:
        cells = []
        for c in cols:
            v = r[c]
            s = "-" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v))
            cells.append(f"{s + ('*' if c in r['best'] else ''):>9}")
        lines.append("  ".join(cells) + ("  yes" if r["best_f1"] else ""))
    lines.append("* best value over the table")
    return "\n".join(lines) + "\n"


def cmd_report(inputs: Sequence[str], out: str = "report") -> dict:
    """Aggregate metrics.csv files (or directories holding one) into report.json and report.txt."""
    if not inputs:
        raise HarnessError("input", "report needs at least one run directory or metrics.csv")
    rows = []
    for item in inputs:
        p = Path(item)
        path = p / "metrics.csv" if p.is_dir() else p
        if not path.is_file():
            raise HarnessError("input", f"missing metrics file {str(path)!r}")
        try:
            rows.extend(parse_metrics_csv(path.read_text()))
        except ValueError as exc:
            raise HarnessError("input", f"{path}: {exc}") from exc
    rep = build_report(rows)
    outp = _out_dir(out)
    _write_json(outp / "report.json", rep)
    (outp / "report.txt").write_text(report_text(rep))
    return rep


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------
def _agents(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpsguard", description="Hierarchical adversarial MARL for CPS defence.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="run configuration file (INI)")
        sp.add_argument("--out", default="runs", help="output directory")
        sp.add_argument("--seed", type=int, action="append", help="seed, repeatable")
        sp.add_argument("--episodes", type=int)

    t = sub.add_parser("train", help="train one mode over one or more seeds")
    common(t)
    t.add_argument("--mode", default="hamarl")
    t.add_argument("--holdout", help="attack type withheld during training, e.g. TAMPER")

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e)
    e.add_argument("checkpoint")
    e.add_argument("--holdout", help="attack type to re-enable, or a mixture (all-dos, weights:SCAN=1,...)")

    b = sub.add_parser("bench-scaling", help="training wall-clock against agent count")
    common(b)
    b.add_argument("--agents", type=_agents, default=list(DEFAULT_AGENTS))

    r = sub.add_parser("report", help="aggregate metrics files")
    r.add_argument("inputs", nargs="*")
    r.add_argument("--out", default="report")
    return p


EXIT_CODES = {"usage": 2, "config": 2, "io": 3, "checkpoint": 4, "training": 5, "input": 6}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "train":
            try:
                mode = Mode.parse(args.mode)
            except ValueError as exc:
                raise HarnessError("config", str(exc)) from exc
            spec = ExperimentSpec(mode=mode, seeds=args.seed or list(DEFAULT_SEEDS), episodes=args.episodes,
                                  out=args.out, holdout=args.holdout, config_path=args.config)
            art = cmd_train(spec)
            print(f"wrote {art.metrics_csv}")
        elif args.verb == "eval":
            seed = args.seed[0] if args.seed else None
            m, res = cmd_eval(args.checkpoint, args.episodes, args.holdout, args.out, args.config, seed)
            print(f"f1={m.f1:.4f} far={m.far if m.far is None else round(m.far, 4)} rho={res.mean_rho:.4f}")
        elif args.verb == "bench-scaling":
            spec = ExperimentSpec(seeds=args.seed or [42], episodes=args.episodes, agent_counts=args.agents,
                                  out=args.out, config_path=args.config)
            cmd_bench_scaling(spec)
            print(f"wrote {os.path.join(args.out, 'scaling.csv')}")
        else:
            rep = cmd_report(args.inputs, args.out)
            sys.stdout.write(report_text(rep))
    except HarnessError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except CheckpointError as exc:
        print(f"error[checkpoint]: {exc}", file=sys.stderr)
        return EXIT_CODES["checkpoint"]
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    return 0
