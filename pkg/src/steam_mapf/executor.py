"""Lockstep episode execution, move arbitration and metrics."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import _kernels
from .costfield import base_weights, compute_cost_field, local_channel
from .errors import EmptyInput, MixedConfig, SingleAgent
from .grid import Action, Scenario, Vertex, next_vertex
from .policy import ExternalPolicy, PolicyConfig, build_observation, greedy_logits, select_action
from .steam import SteamConfig, SteamController

ARBITRATION = "index-priority"


def resolve_moves(prev: Sequence[Vertex], proposed: Sequence[Vertex]) -> List[Vertex]:
    """Revert conflicting moves until none remain.

    Rules, applied repeatedly: swapping pairs both stay; among agents targeting
    one cell the lowest index moves; a move into a cell some other agent ends
    the step on is reverted.
    """
    prev = [tuple(p) for p in prev]
    nxt = [tuple(p) for p in proposed]
    n = len(prev)
    prev_owner = {v: i for i, v in enumerate(prev)}
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if nxt[i] == prev[i]:
                continue
            j = prev_owner.get(nxt[i])
            if j is not None and j != i and nxt[j] == prev[i]:
                nxt[i], nxt[j] = prev[i], prev[j]
                changed = True
        claims: Dict[Vertex, List[int]] = {}
        for i in range(n):
            if nxt[i] != prev[i]:
                claims.setdefault(nxt[i], []).append(i)
        for v, idx in claims.items():
            for i in idx[1:]:
                nxt[i] = prev[i]
                changed = True
        final = {}
        for i in range(n):
            if nxt[i] == prev[i]:
                final[nxt[i]] = i
        for i in range(n):
            if nxt[i] != prev[i] and nxt[i] in final:
                nxt[i] = prev[i]
                changed = True
    return nxt


def compute_density(trajectories, radius: int = 5, norm: str = "chebyshev") -> float:
    """Mean fraction of other agents within ``radius`` over steps 1..T.

    ``trajectories`` is (T+1, N, 2). An episode with no executed step is scored
    on its initial configuration.
    """
    traj = np.asarray(trajectories, dtype=np.int64)
    if traj.ndim != 3 or traj.shape[1] < 2:
        raise SingleAgent("density needs at least two agents")
    if traj.shape[0] == 1:
        traj = np.concatenate([traj, traj])
    if norm not in ("chebyshev", "manhattan"):
        raise ValueError(f"unknown norm {norm!r}")
    return float(_kernels.density(np.ascontiguousarray(traj), int(radius), norm == "chebyshev"))


def config_hash(policy: PolicyConfig, steam: Optional[SteamConfig], max_steps: int, density_radius: int) -> str:
    doc = {
        "policy": policy.to_dict(),
        "steam": steam.to_dict() if steam is not None else None,
        "max_steps": max_steps,
        "density_radius": density_radius,
        "arbitration": ARBITRATION,
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def rle_encode(path: Sequence[Vertex]) -> List[List[int]]:
    out: List[List[int]] = []
    for v in path:
        if out and out[-1][0] == v[0] and out[-1][1] == v[1]:
            out[-1][2] += 1
        else:
            out.append([int(v[0]), int(v[1]), 1])
    return out


def rle_decode(runs: Sequence[Sequence[int]]) -> List[Vertex]:
    return [(r, c) for r, c, k in runs for _ in range(k)]


@dataclass
class EpisodeReport:
    status: str  # "success" | "failure" | "infrastructure_error"
    makespan: int
    sum_of_costs: int
    agent_costs: List[int]
    steps: int
    seed: int
    config_hash: str
    steam_enabled: bool
    density: Optional[float] = None
    trajectories: Optional[List[List[Vertex]]] = None
    step_times: List[float] = field(default_factory=list)
    steam_times: List[float] = field(default_factory=list)
    steam_stats: Optional[dict] = None
    steam_noop: Optional[bool] = None
    trace: Optional[list] = None
    error: Optional[str] = None
    arbitration: str = ARBITRATION

    @property
    def success(self) -> bool:
        return self.status == "success"

    @property
    def mean_step_ms(self) -> float:
        return 1e3 * float(np.mean(self.step_times)) if self.step_times else 0.0

    @property
    def mean_steam_ms(self) -> float:
        return 1e3 * float(np.mean(self.steam_times)) if self.steam_times else 0.0

    def to_dict(self, trajectories: str = "rle") -> dict:
        """JSON-ready dict; wall-clock values live under ``timing`` only."""
        d = {
            "status": self.status,
            "success": self.success,
            "makespan": self.makespan,
            "sum_of_costs": self.sum_of_costs,
            "agent_costs": list(self.agent_costs),
            "steps": self.steps,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "arbitration": self.arbitration,
            "steam_enabled": self.steam_enabled,
            "density": self.density,
            "steam_stats": self.steam_stats,
            "steam_noop": self.steam_noop,
            "error": self.error,
            "timing": {
                "mean_step_ms": self.mean_step_ms,
                "mean_steam_ms": self.mean_steam_ms,
                "step_ms": [1e3 * x for x in self.step_times],
            },
        }
        if self.trajectories is not None and trajectories != "none":
            if trajectories == "rle":
                d["trajectories_rle"] = [rle_encode(p) for p in self.trajectories]
            else:
                d["trajectories"] = [[list(v) for v in p] for p in self.trajectories]
        if self.trace is not None:
            d["trace"] = self.trace
        return d


def _arrival_costs(traj: List[List[Vertex]], goals: Sequence[Vertex]) -> List[int]:
    # first step from which the agent sits on its goal until the end
    n_steps = len(traj) - 1
    costs = []
    for i, g in enumerate(goals):
        t = n_steps
        while t >= 0 and traj[t][i] == g:
            t -= 1
        costs.append(t + 1 if t < n_steps else n_steps)
    return costs


def run_episode(
    scenario: Scenario,
    policy: PolicyConfig,
    steam: Optional[SteamConfig] = None,
    seed: Optional[int] = None,
    *,
    trace: bool = False,
    record_trajectories: bool = True,
    density_radius: Optional[int] = None,
    external: Optional[ExternalPolicy] = None,
) -> EpisodeReport:
    """Simulate until every agent sits on its goal or ``max_steps`` is reached.

    External-policy failures propagate as ``PolicyError``.
    """
    grid = scenario.map
    goals = [tuple(g) for g in scenario.goals]
    n = scenario.n_agents
    seed = scenario.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    window = policy.window
    radius = window // 2 if density_radius is None else density_radius
    w0 = base_weights(grid)
    weights = [w0] * n
    goal_fields = {}
    for g in goals:
        goal_fields[g] = compute_cost_field(grid, w0, g)
    fields = [goal_fields[g] for g in goals]
    ctl = None
    if steam is not None:
        ctl = SteamController(grid, goals, steam, weights, window, policy.blocked_logit, fields)

    own_external = False
    if policy.kind == "external" and external is None:
        external = ExternalPolicy(policy.command, policy.timeout)
        own_external = True

    positions = [tuple(s) for s in scenario.starts]
    traj = [list(positions)]
    step_times, steam_times = [], []
    trace_rows = [] if trace else None
    emergent_active = False
    try:
        for t in range(scenario.max_steps):
            if positions == goals:
                break
            t0 = time.perf_counter()
            if ctl is not None and ctl.is_update_step(t):
                ctl.update(positions, t)
            t_steam = time.perf_counter() - t0

            cur_fields = ctl.eff_fields if ctl is not None else fields
            occupancy = np.zeros(grid.shape, dtype=bool)
            for p in positions:
                occupancy[p] = True
            obs = []
            for i in range(n):
                chan = local_channel(cur_fields[i], positions[i], window)
                obs.append(build_observation(grid, positions, i, chan, window, goals[i], occupancy))
            if external is not None:
                logits = external.query(t, obs)
            else:
                logits = [greedy_logits(o, policy) for o in obs]

            t1 = time.perf_counter()
            if ctl is not None:
                scores = ctl.density_scores_for(positions, t)
                d_time = ctl.time_deltas(positions)
                lt = np.asarray(logits, dtype=np.float64) + d_time
                d_emg = ctl.emergent_deltas(lt, scores)
                if np.any(d_emg):
                    emergent_active = True
                logits = list(lt + d_emg)
                if trace_rows is not None:
                    for i in np.flatnonzero(np.any(d_time != 0, axis=1) | np.any(d_emg != 0, axis=1)):
                        trace_rows.append(
                            {"t": t, "agent": int(i), "time": d_time[i].tolist(), "emergent": d_emg[i].tolist()}
                        )
            t_steam += time.perf_counter() - t1

            proposed = [
                next_vertex(grid, positions[i], select_action(logits[i], policy, rng)) for i in range(n)
            ]
            step_times.append(time.perf_counter() - t0)
            steam_times.append(t_steam)
            positions = resolve_moves(positions, proposed)
            traj.append(list(positions))
    finally:
        if own_external:
            external.close()

    success = positions == goals
    costs = _arrival_costs(traj, goals)
    makespan = max(costs) if costs else 0
    density = compute_density(traj, radius) if n >= 2 else None
    stats = ctl.stats() if ctl is not None else None
    noop = None
    if ctl is not None:
        noop = stats["spatial_interventions"] == 0 and stats["temporal_assignments"] == 0 and not emergent_active
    return EpisodeReport(
        status="success" if success else "failure",
        makespan=makespan,
        sum_of_costs=int(sum(costs)),
        agent_costs=costs,
        steps=len(traj) - 1,
        seed=int(seed),
        config_hash=config_hash(policy, steam, scenario.max_steps, radius),
        steam_enabled=steam is not None,
        density=density,
        trajectories=[[traj[t][i] for t in range(len(traj))] for i in range(n)] if record_trajectories else None,
        step_times=step_times,
        steam_times=steam_times,
        steam_stats=stats,
        steam_noop=noop,
        trace=trace_rows,
    )


def infrastructure_failure(scenario: Scenario, policy: PolicyConfig, steam, seed: int, error: Exception, density_radius=None) -> EpisodeReport:
    radius = policy.window // 2 if density_radius is None else density_radius
    return EpisodeReport(
        status="infrastructure_error",
        makespan=scenario.max_steps,
        sum_of_costs=scenario.max_steps * scenario.n_agents,
        agent_costs=[scenario.max_steps] * scenario.n_agents,
        steps=0,
        seed=int(seed),
        config_hash=config_hash(policy, steam, scenario.max_steps, radius),
        steam_enabled=steam is not None,
        error=f"{type(error).__name__}: {error}",
    )


@dataclass
class Stat:
    mean: float
    ci95: float

    def to_dict(self):
        return {"mean": self.mean, "ci95": self.ci95}


def _stat(values: Sequence[float]) -> Stat:
    arr = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if len(arr) == 0:
        return Stat(float("nan"), float("nan"))
    if len(arr) == 1:
        return Stat(float(arr[0]), 0.0)
    return Stat(float(arr.mean()), float(1.96 * arr.std(ddof=1) / math.sqrt(len(arr))))


@dataclass
class BenchReport:
    config_hash: str
    episodes: int
    successes: int
    infrastructure_failures: int
    success_rate: Stat
    makespan: Stat
    sum_of_costs: Stat
    runtime_ms: Stat
    steam_ms: Stat
    density: Stat
    seeds: List[int]

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "config_hash": self.config_hash,
            "episodes": self.episodes,
            "successes": self.successes,
            "infrastructure_failures": self.infrastructure_failures,
            "success_rate": self.success_rate.to_dict(),
            "makespan": self.makespan.to_dict(),
            "sum_of_costs": self.sum_of_costs.to_dict(),
            "density": self.density.to_dict(),
            "seeds": list(self.seeds),
        }
        if timing:
            d["timing"] = {"runtime_ms": self.runtime_ms.to_dict(), "steam_ms": self.steam_ms.to_dict()}
        return d


def aggregate_reports(reports: Sequence[EpisodeReport]) -> BenchReport:
    """Means with 95% normal-approximation intervals; infrastructure failures excluded from MAPF metrics."""
    if not reports:
        raise EmptyInput("no episode reports")
    hashes = {r.config_hash for r in reports}
    if len(hashes) > 1:
        raise MixedConfig(f"reports mix config hashes {sorted(hashes)}")
    ok = [r for r in reports if r.status != "infrastructure_error"]
    return BenchReport(
        config_hash=reports[0].config_hash,
        episodes=len(reports),
        successes=sum(r.success for r in ok),
        infrastructure_failures=len(reports) - len(ok),
        success_rate=_stat([float(r.success) for r in ok]),
        makespan=_stat([r.makespan for r in ok]),
        sum_of_costs=_stat([r.sum_of_costs for r in ok]),
        runtime_ms=_stat([r.mean_step_ms for r in ok]),
        steam_ms=_stat([r.mean_steam_ms for r in ok]),
        density=_stat([r.density for r in ok]),
        seeds=[r.seed for r in reports],
    )
