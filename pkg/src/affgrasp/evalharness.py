"""Experiment orchestration: seeded runs, splits, comparison, export.

An experiment spec names the task, the object split, the controller mode,
and seeds; running it trains (or, for zero-shot, just evaluates) per seed
and leaves deterministic metric records plus per-seed artifacts on disk.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .policy.mixture import MixtureConfig, RewardConfig
from .policy.rollout import RolloutConfig, evaluate_policy, run_training
from .policy.sac import SACConfig
from .sim.env import EnvConfig
from .sim.objects import SEEN_OBJECTS, UNSEEN_OBJECTS

SPLITS = ("seen", "unseen-train", "unseen-zero-shot")


class SpecError(ValueError):
    pass


class MissingPrerequisites(RuntimeError):
    """Every missing input is listed before any compute starts."""


@dataclass
class ExperimentSpec:
    task: str = "grasp"
    split: str = "seen"
    mode: str = "vapo"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    total_steps: int = 10_000
    eval_interval: int = 1_000
    eval_episodes: int = 20
    afford_static: str = ""
    afford_gripper: str = ""
    out_dir: str = "runs/experiment"
    policy_ckpts: dict[str, str] = field(default_factory=dict)  # seed -> ckpt (zero-shot)
    d_max: float = 0.15
    auto_lift: bool = True

    def validate(self) -> None:
        if self.task not in ("grasp", "drawer"):
            raise SpecError(f"unknown task {self.task!r}")
        if self.split not in SPLITS:
            raise SpecError(f"split must be one of {SPLITS}")
        if self.mode not in ("vapo", "local-sac"):
            raise SpecError(f"mode must be 'vapo' or 'local-sac'")
        if not self.seeds:
            raise SpecError("at least one seed required")
        if self.eval_episodes < 1:
            raise SpecError("eval_episodes must be >= 1")
        if self.split != "unseen-zero-shot":
            if self.eval_interval < 1 or self.total_steps % self.eval_interval:
                raise SpecError("eval_interval must divide total_steps")

    def object_set(self) -> tuple[str, ...]:
        return SEEN_OBJECTS if self.split == "seen" else UNSEEN_OBJECTS


def load_spec(path) -> ExperimentSpec:
    data = yaml.safe_load(Path(path).read_text())
    spec = ExperimentSpec(**data)
    spec.validate()
    return spec


def save_spec(spec: ExperimentSpec, path) -> None:
    Path(path).write_text(yaml.safe_dump(asdict(spec), sort_keys=False))


@dataclass
class MetricsRecord:
    mode: str
    seed: int
    step: int
    success_rate: float
    mean_return: float
    mean_length: float
    min_length: int = 0
    max_length: int = 0

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError(f"success rate {self.success_rate} outside [0, 1]")


def _configs_for(spec: ExperimentSpec, seed: int):
    env_cfg = EnvConfig()
    mixture = MixtureConfig(d_max=max(spec.d_max, 0.15))
    reward = RewardConfig(d_max=spec.d_max)
    sac = SACConfig()
    rollout = RolloutConfig(
        mode=spec.mode,
        task=spec.task,
        object_set=spec.object_set(),
        total_steps=spec.total_steps,
        seed=seed,
        eval_interval=spec.eval_interval,
        eval_episodes=spec.eval_episodes,
        auto_lift=spec.auto_lift,
    )
    return env_cfg, mixture, reward, sac, rollout


def _check_prereqs(spec: ExperimentSpec) -> None:
    missing = []
    for label, path in (("afford_static", spec.afford_static), ("afford_gripper", spec.afford_gripper)):
        if not path or not Path(path).exists():
            missing.append(f"{label}: {path or '<unset>'}")
    if spec.split == "unseen-zero-shot":
        for seed in spec.seeds:
            ck = spec.policy_ckpts.get(str(seed))
            if not ck or not Path(ck).exists():
                missing.append(f"policy_ckpts[{seed}]: {ck or '<unset>'}")
    if missing:
        raise MissingPrerequisites("missing prerequisites:\n  " + "\n  ".join(missing))


def _assert_split_hygiene(spec: ExperimentSpec) -> None:
    """Zero-shot objects must never appear in the training run's metadata."""
    zero_objects = set(spec.object_set())
    for seed in spec.seeds:
        meta_path = Path(spec.policy_ckpts[str(seed)]).parent / "meta.json"
        if not meta_path.exists():
            continue
        trained_on = set(json.loads(meta_path.read_text()).get("object_set", []))
        overlap = zero_objects & trained_on
        if overlap:
            raise SpecError(
                f"zero-shot objects {sorted(overlap)} appear in the seed-{seed} training run"
            )


def run_experiment(spec: ExperimentSpec) -> list[MetricsRecord]:
    """Train/evaluate per seed; returns records and writes artifacts on disk."""
    spec.validate()
    _check_prereqs(spec)
    out_root = Path(spec.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    records: list[MetricsRecord] = []

    if spec.split == "unseen-zero-shot":
        _assert_split_hygiene(spec)
        for seed in spec.seeds:
            env_cfg, mixture, reward, _sac, rollout = _configs_for(spec, seed)
            result = evaluate_policy(
                spec.policy_ckpts[str(seed)],
                env_cfg,
                spec.afford_static,
                spec.afford_gripper,
                mixture,
                reward,
                rollout,
                episodes=spec.eval_episodes,
                seed=seed,
            )
            records.append(
                MetricsRecord(
                    mode=spec.mode,
                    seed=seed,
                    step=0,
                    success_rate=result["success_rate"],
                    mean_return=result["mean_return"],
                    mean_length=result["mean_length"],
                )
            )
    else:
        for seed in spec.seeds:
            env_cfg, mixture, reward, sac, rollout = _configs_for(spec, seed)
            run_dir = out_root / f"{spec.mode}-seed{seed}"
            result = run_training(
                env_cfg,
                spec.afford_static,
                spec.afford_gripper,
                mixture,
                reward,
                sac,
                rollout,
                out_dir=run_dir,
            )
            for row in result["eval_rows"]:
                records.append(
                    MetricsRecord(
                        mode=spec.mode,
                        seed=seed,
                        step=row["step"],
                        success_rate=row["success_rate"],
                        mean_return=row["mean_return"],
                        mean_length=row["mean_length"],
                        min_length=row.get("min_length", 0),
                        max_length=row.get("max_length", 0),
                    )
                )

    export(records, out_root / "records.csv", "csv")
    summary = aggregate(records)
    (out_root / "summary.json").write_text(json.dumps(summary, indent=2))
    return records


def aggregate(records: list[MetricsRecord]) -> dict:
    """Median and IQR of the final success rate across seeds, per mode."""
    out: dict = {}
    by_mode: dict[str, dict[int, MetricsRecord]] = {}
    for rec in records:
        latest = by_mode.setdefault(rec.mode, {})
        if rec.seed not in latest or rec.step >= latest[rec.seed].step:
            latest[rec.seed] = rec
    for mode, per_seed in by_mode.items():
        finals = [r.success_rate for r in per_seed.values()]
        q1, med, q3 = np.percentile(finals, [25, 50, 75])
        out[mode] = {
            "seeds": sorted(per_seed.keys()),
            "final_success_median": float(med),
            "final_success_iqr": [float(q1), float(q3)],
            "reporting": "median over seeds (IQR in brackets)",
        }
    return out


def steps_to_sustained(records: list[MetricsRecord], threshold: float) -> dict[tuple[str, int], float]:
    """Earliest eval step from which success stays >= threshold to the end.

    Returns math.inf for runs that never sustain the threshold.
    """
    out: dict[tuple[str, int], float] = {}
    runs: dict[tuple[str, int], list[MetricsRecord]] = {}
    for rec in records:
        runs.setdefault((rec.mode, rec.seed), []).append(rec)
    for key, rows in runs.items():
        rows = sorted(rows, key=lambda r: r.step)
        answer = math.inf
        for i, row in enumerate(rows):
            if all(r.success_rate >= threshold for r in rows[i:]):
                answer = float(row.step)
                break
        out[key] = answer
    return out


def compare(records: list[MetricsRecord], threshold: float = 0.6) -> dict:
    """Per-mode median steps-to-threshold and the baseline/vapo speedup ratio."""
    per_run = steps_to_sustained(records, threshold)
    modes: dict[str, list[float]] = {}
    for (mode, _seed), steps in per_run.items():
        modes.setdefault(mode, []).append(steps)
    table = {}
    for mode, vals in modes.items():
        finite = [v for v in vals if math.isfinite(v)]
        reached = len(finite)
        median = float(np.median(vals)) if reached == len(vals) else math.inf
        table[mode] = {
            "median_steps_to_threshold": median if math.isfinite(median) else "not reached",
            "runs_reaching": reached,
            "runs_total": len(vals),
        }
    result = {"threshold": threshold, "per_mode": table, "per_run": {f"{m}/{s}": v for (m, s), v in per_run.items()}}
    if "vapo" in modes and "local-sac" in modes:
        v = float(np.median(modes["vapo"]))
        b = float(np.median(modes["local-sac"]))
        if not math.isfinite(v):
            result["speedup_baseline_over_vapo"] = "vapo not reached"
        elif not math.isfinite(b):
            result["speedup_baseline_over_vapo"] = "inf / not reached"
        else:
            result["speedup_baseline_over_vapo"] = b / v if v > 0 else math.inf
    return result


FIELDS = [
    "mode",
    "seed",
    "step",
    "success_rate",
    "mean_return",
    "mean_length",
    "min_length",
    "max_length",
]


def export(records: list[MetricsRecord], path, fmt: str = "csv") -> Path:
    """Lossless long-format export with a stable column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=FIELDS)
            writer.writeheader()
            for rec in records:
                writer.writerow({k: getattr(rec, k) for k in FIELDS})
    elif fmt == "json":
        path.write_text(json.dumps([{k: getattr(r, k) for k in FIELDS} for r in records], indent=2))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def load_records_csv(path) -> list[MetricsRecord]:
    out = []
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            out.append(
                MetricsRecord(
                    mode=row["mode"],
                    seed=int(row["seed"]),
                    step=int(row["step"]),
                    success_rate=float(row["success_rate"]),
                    mean_return=float(row["mean_return"]),
                    mean_length=float(row["mean_length"]),
                    min_length=int(float(row["min_length"])),
                    max_length=int(float(row["max_length"])),
                )
            )
    return out
