"""Run configuration, paired A/B benchmark execution and report writers."""

from __future__ import annotations

import csv
import glob
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np

from .errors import PolicyError
from .executor import (
    EpisodeReport,
    aggregate_reports,
    infrastructure_failure,
    run_episode,
)
from .grid import Scenario, load_scenario
from .policy import PolicyConfig
from .scengen import GenSpec, episode_seed, generate
from .steam import SteamConfig

ARMS = ("off", "on")


class ConfigError(ValueError):
    pass


def _build(cls, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object, got {type(doc).__name__}")
    known = {f.name for f in fields(cls)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{where}.{key}: unknown field")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class RunConfig:
    gen: Optional[GenSpec] = field(default_factory=lambda: GenSpec())
    scenario_files: Optional[List[str]] = None
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    steam: Optional[SteamConfig] = field(default_factory=SteamConfig)
    arms: List[str] = field(default_factory=lambda: list(ARMS))
    episodes: int = 128
    seed: int = 0
    output: str = "bench.json"
    format: str = "json"
    jobs: int = 1
    density_radius: Optional[int] = None
    trajectories: bool = False

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes: must be >= 1")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format: unknown report format {self.format!r}")
        if not self.arms or any(a not in ARMS for a in self.arms):
            raise ConfigError(f"arms: must be a non-empty subset of {list(ARMS)}")
        self.arms = [a for a in ARMS if a in self.arms]
        if "on" in self.arms and self.steam is None:
            raise ConfigError("steam: the 'on' arm needs a steam section")
        if self.gen is None and not self.scenario_files:
            raise ConfigError("gen: need a generator spec or scenario_files")
        if self.jobs < 1:
            raise ConfigError("jobs: must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(f"{key}: unknown field")
        d = dict(doc)
        if "gen" in d and d["gen"] is not None:
            d["gen"] = _build(GenSpec, d["gen"], "gen")
        if "policy" in d:
            d["policy"] = _build(PolicyConfig, d["policy"], "policy")
        if "steam" in d and d["steam"] is not None:
            d["steam"] = _build(SteamConfig, d["steam"], "steam")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "gen": self.gen.to_dict() if self.gen is not None else None,
            "scenario_files": list(self.scenario_files) if self.scenario_files else None,
            "policy": self.policy.to_dict(),
            "steam": self.steam.to_dict() if self.steam is not None else None,
            "arms": list(self.arms),
            "episodes": self.episodes,
            "seed": self.seed,
            "output": self.output,
            "format": self.format,
            "jobs": self.jobs,
            "density_radius": self.density_radius,
            "trajectories": self.trajectories,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return RunConfig.from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), path)


def expand_scenario_files(paths: List[str]) -> List[str]:
    out = []
    for p in paths:
        if os.path.isdir(p):
            found = sorted(glob.glob(os.path.join(p, "*.json")))
            if not found:
                raise FileNotFoundError(f"no scenario files in {p}")
            out.extend(found)
        elif not os.path.exists(p):
            raise FileNotFoundError(f"scenario file not found: {p}")
        else:
            out.append(p)
    return out


def episode_scenarios(cfg: RunConfig) -> List[Scenario]:
    if cfg.scenario_files:
        return [load_scenario(p) for p in expand_scenario_files(cfg.scenario_files)]
    out = []
    for e in range(cfg.episodes):
        spec = GenSpec(**{**cfg.gen.to_dict(), "seed": episode_seed(cfg.seed, e)})
        out.append(generate(spec))
    return out


def _run_arm(scenario: Scenario, cfg: RunConfig, arm: str) -> EpisodeReport:
    steam = cfg.steam if arm == "on" else None
    try:
        return run_episode(
            scenario,
            cfg.policy,
            steam,
            scenario.seed,
            record_trajectories=cfg.trajectories,
            density_radius=cfg.density_radius,
        )
    except PolicyError as exc:
        return infrastructure_failure(scenario, cfg.policy, steam, scenario.seed, exc, cfg.density_radius)


def _run_pair(args):
    scenario, cfg = args
    return {arm: _run_arm(scenario, cfg, arm) for arm in cfg.arms}


def _paired(a: List[float], b: List[float]) -> dict:
    diff = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    if len(diff) == 0:
        return {"mean": float("nan"), "ci95": float("nan")}
    ci = 0.0 if len(diff) < 2 else float(1.96 * diff.std(ddof=1) / np.sqrt(len(diff)))
    return {"mean": float(diff.mean()), "ci95": ci}


def run_benchmark(cfg: RunConfig) -> dict:
    """Both arms on identical scenarios and seeds; returns the JSON-ready report."""
    scenarios = episode_scenarios(cfg)
    jobs = [(s, cfg) for s in scenarios]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_pair, jobs))
    else:
        results = [_run_pair(j) for j in jobs]

    per_arm: Dict[str, List[EpisodeReport]] = {arm: [r[arm] for r in results] for arm in cfg.arms}
    report = {
        "config": cfg.to_dict(),
        "seeds": [int(s.seed) for s in scenarios],
        "arms": {arm: aggregate_reports(reps).to_dict() for arm, reps in per_arm.items()},
        "episodes": {
            arm: [r.to_dict(trajectories="rle" if cfg.trajectories else "none") for r in reps]
            for arm, reps in per_arm.items()
        },
    }
    if len(cfg.arms) == 2:
        off, on = per_arm["off"], per_arm["on"]
        both_ok = [k for k in range(len(off)) if off[k].status != "infrastructure_error" and on[k].status != "infrastructure_error"]
        report["delta"] = {
            "successes": sum(on[k].success for k in both_ok) - sum(off[k].success for k in both_ok),
            "success_rate": _paired([off[k].success for k in both_ok], [on[k].success for k in both_ok]),
            "makespan": _paired([off[k].makespan for k in both_ok], [on[k].makespan for k in both_ok]),
            "sum_of_costs": _paired([off[k].sum_of_costs for k in both_ok], [on[k].sum_of_costs for k in both_ok]),
            "density": _paired(
                [off[k].density for k in both_ok if off[k].density is not None],
                [on[k].density for k in both_ok if on[k].density is not None],
            ),
            "timing": {
                "runtime_ms": _paired([off[k].mean_step_ms for k in both_ok], [on[k].mean_step_ms for k in both_ok]),
            },
        }
    return report


CSV_FIELDS = [
    "arm", "config_hash", "episodes", "successes", "success_rate", "success_rate_ci95",
    "makespan", "makespan_ci95", "sum_of_costs", "sum_of_costs_ci95", "density", "density_ci95",
    "runtime_ms", "runtime_ms_ci95", "infrastructure_failures",
]


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    return x


def report_rows(report: dict) -> List[dict]:
    rows = []
    for arm, agg in report["arms"].items():
        t = agg.get("timing", {}).get("runtime_ms", {"mean": float("nan"), "ci95": float("nan")})
        rows.append({
            "arm": arm,
            "config_hash": agg["config_hash"],
            "episodes": agg["episodes"],
            "successes": agg["successes"],
            "success_rate": agg["success_rate"]["mean"],
            "success_rate_ci95": agg["success_rate"]["ci95"],
            "makespan": agg["makespan"]["mean"],
            "makespan_ci95": agg["makespan"]["ci95"],
            "sum_of_costs": agg["sum_of_costs"]["mean"],
            "sum_of_costs_ci95": agg["sum_of_costs"]["ci95"],
            "density": agg["density"]["mean"],
            "density_ci95": agg["density"]["ci95"],
            "runtime_ms": t["mean"],
            "runtime_ms_ci95": t["ci95"],
            "infrastructure_failures": agg["infrastructure_failures"],
        })
    if "delta" in report:
        d = report["delta"]
        rt = d.get("timing", {}).get("runtime_ms", {"mean": float("nan"), "ci95": float("nan")})
        rows.append({
            "arm": "delta",
            "config_hash": "",
            "episodes": rows[0]["episodes"],
            "successes": d["successes"],
            "success_rate": d["success_rate"]["mean"],
            "success_rate_ci95": d["success_rate"]["ci95"],
            "makespan": d["makespan"]["mean"],
            "makespan_ci95": d["makespan"]["ci95"],
            "sum_of_costs": d["sum_of_costs"]["mean"],
            "sum_of_costs_ci95": d["sum_of_costs"]["ci95"],
            "density": d["density"]["mean"],
            "density_ci95": d["density"]["ci95"],
            "runtime_ms": rt["mean"],
            "runtime_ms_ci95": rt["ci95"],
            "infrastructure_failures": "",
        })
    return rows


def to_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in report_rows(report):
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def to_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True, allow_nan=True) + "\n"


def strip_timing(doc):
    """Drop every ``timing`` entry recursively (wall-clock values)."""
    if isinstance(doc, dict):
        return {k: strip_timing(v) for k, v in doc.items() if k != "timing"}
    if isinstance(doc, list):
        return [strip_timing(v) for v in doc]
    return doc


def infrastructure_failures(report: dict) -> int:
    return sum(agg["infrastructure_failures"] for agg in report["arms"].values())
