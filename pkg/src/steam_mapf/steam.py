"""Test-time congestion handling wrapped around any logit-producing policy.

Each update round rolls out every agent's shortest path, finds predicted
same-vertex coincidences, and sorts them into two bins:

* avoidable: one of the two agents has a route around the vertex; that agent
  gets the vertex penalized in its own weight field, which changes the cost
  channel it observes;
* temporal-only: neither agent can route around; a minimum set of agents
  covering those pairs is penalized for making progress toward the shared
  vertex.

On top, every step, actions leading into cells that nearby agents are heading
for are damped in proportion to the logit spread.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .costfield import CostField, PathPlan, compute_cost_field, extract_path_indices
from .cover import EXACT_LIMIT, solve_cover
from .errors import NoConflict, Unreachable
from .grid import ACTIONS, N_ACTIONS, GridMap, Vertex, next_vertex


@dataclass
class SteamConfig:
    probe_penalty: Optional[float] = None  # None: width*height*max_weight + 1
    min_detour: float = 1.0
    gamma_time: float = 4.0
    gamma_dist: float = 4.0
    eps: float = 1e-9
    alpha: float = 0.3
    update_interval: int = 5
    horizon_cap: int = 128
    rollout_weights: str = "base"  # "base" | "effective"
    include_swaps: bool = False
    spatial: bool = True
    emergent_every_step: bool = True
    sigma_exclude_blocked: bool = True
    cover_exact_limit: int = EXACT_LIMIT

    def __post_init__(self):
        if self.update_interval < 1:
            raise ValueError("update_interval must be >= 1")
        if self.horizon_cap < 1:
            raise ValueError("horizon_cap must be >= 1")
        if self.rollout_weights not in ("base", "effective"):
            raise ValueError(f"unknown rollout_weights {self.rollout_weights!r}")
        if self.probe_penalty is not None and not self.probe_penalty > 0:
            raise ValueError("probe_penalty must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        for name in ("gamma_time", "gamma_dist", "alpha", "min_detour"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def default_probe_penalty(grid: GridMap, weights: Sequence[np.ndarray]) -> float:
    # strictly above the cost of any simple path, hence above any detour
    max_w = max(float(np.max(w[np.isfinite(w)], initial=1.0)) for w in weights)
    return grid.width * grid.height * max_w + 1.0


@dataclass(frozen=True)
class CongestionPoint:
    i: int
    j: int
    v: Vertex
    h: int
    # edge swaps only: the vertex agent j enters (agent i enters ``v``)
    v_j: Optional[Vertex] = None

    def vertex_for(self, agent: int) -> Vertex:
        if agent == self.j and self.v_j is not None:
            return self.v_j
        return self.v


@dataclass(frozen=True)
class SpatialIntervention:
    agent: int
    v: Vertex
    detour: float


@dataclass(frozen=True)
class ProbeResult:
    avoidable: bool
    agent: Optional[int]
    detour: Optional[float]
    detours: Tuple[float, float]

    @property
    def temporal_only(self) -> bool:
        return not self.avoidable


@dataclass(frozen=True)
class TemporalAssignment:
    agent: int
    v: Vertex
    h: int
    lam: float


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def rollout_paths(
    grid: GridMap,
    positions: Sequence[Vertex],
    fields: Sequence[CostField],
) -> List[PathPlan]:
    paths = []
    width = grid.width
    for k, (p, f) in enumerate(zip(positions, fields)):
        try:
            flat = extract_path_indices(grid, f, p)
        except Unreachable:
            raise Unreachable(f"agent {k} at {p} cannot reach {f.target}", agent=k) from None
        paths.append(PathPlan(tuple((int(i) // width, int(i) % width) for i in flat)))
    return paths


def _offsets(grid: GridMap, paths: Sequence[PathPlan], horizon: int) -> np.ndarray:
    longest = max(len(p) for p in paths)
    n_off = min(horizon, longest - 1) + 1
    traj = np.empty((len(paths), n_off), dtype=np.int64)
    for k, p in enumerate(paths):
        flat = [grid.index(v) for v in p.vertices[:n_off]]
        traj[k, : len(flat)] = flat
        traj[k, len(flat) :] = flat[-1]
    return traj


def detect_congestion(
    paths: Sequence[PathPlan],
    horizon_cap: int = 128,
    grid: GridMap | None = None,
    include_swaps: bool = False,
) -> List[CongestionPoint]:
    """Pairwise same-vertex coincidences at offsets 1..horizon_cap, sorted by (h, i, j)."""
    if len(paths) < 2:
        return []
    if grid is None:
        rows = max(v[0] for p in paths for v in p.vertices) + 1
        cols = max(v[1] for p in paths for v in p.vertices) + 1
        grid = GridMap.empty(rows, cols)
    traj = _offsets(grid, paths, horizon_cap)
    hits = _kernels.coincidences(traj)
    points = [
        CongestionPoint(int(i), int(j), grid.vertex(traj[i, h]), int(h)) for h, i, j in hits
    ]
    if include_swaps:
        n_off = traj.shape[1]
        for h in range(n_off - 1):
            a, b = traj[:, h], traj[:, h + 1]
            for i in range(len(paths)):
                if a[i] == b[i]:
                    continue
                js = np.nonzero((a == b[i]) & (b == a[i]))[0]
                for j in js:
                    if j > i:
                        points.append(
                            CongestionPoint(i, int(j), grid.vertex(b[i]), h + 1, v_j=grid.vertex(b[j]))
                        )
    points.sort(key=lambda p: (p.h, p.i, p.j))
    return points


# ---------------------------------------------------------------------------
# spatial resolution
# ---------------------------------------------------------------------------

def probe_detour(
    grid: GridMap,
    w: np.ndarray,
    position: Vertex,
    goal: Vertex,
    v: Vertex,
    penalty: float,
    base_cost: float | None = None,
) -> float:
    """Extra cost of reaching ``goal`` when ``v`` carries ``penalty`` on top of ``w``.

    The goal itself cannot be bypassed, so ``v == goal`` returns ``penalty``
    (the target's weight never enters a path cost).
    """
    if v == tuple(goal):
        return float(penalty)
    flat_w = np.ascontiguousarray(w, dtype=np.float64).ravel()
    src, tgt = grid.index(position), grid.index(goal)
    if base_cost is None:
        base_cost = float(_kernels.dijkstra(flat_w, grid.height, grid.width, tgt, src)[src])
    probe = flat_w.copy()
    probe[grid.index(v)] += penalty
    probed = float(_kernels.dijkstra(probe, grid.height, grid.width, tgt, src)[src])
    return probed - base_cost


def _bypasses(detour: float, penalty: float) -> bool:
    # relative slack absorbs float error in (J + penalty) - J
    return detour < penalty * (1.0 - 1e-9)


def probe_spatial(
    point: CongestionPoint,
    grid: GridMap,
    positions: Sequence[Vertex],
    goals: Sequence[Vertex],
    weights: Sequence[np.ndarray],
    penalty: float,
    min_detour: float = 0.0,
    base_costs: Sequence[float] | None = None,
    cache: Dict | None = None,
) -> ProbeResult:
    detours = []
    for r in (point.i, point.j):
        key = (r, point.vertex_for(r))
        if cache is not None and key in cache:
            d = cache[key]
        else:
            d = probe_detour(
                grid,
                weights[r],
                positions[r],
                goals[r],
                point.vertex_for(r),
                penalty,
                None if base_costs is None else base_costs[r],
            )
            if cache is not None:
                cache[key] = d
        detours.append(d)
    candidates = [(d, r) for d, r in zip(detours, (point.i, point.j)) if _bypasses(d, penalty)]
    if not candidates:
        return ProbeResult(False, None, None, tuple(detours))
    d, k = min(candidates)
    return ProbeResult(True, k, max(d, min_detour), tuple(detours))


def aggregate_interventions(
    interventions: Sequence[SpatialIntervention],
    weights: Sequence[np.ndarray],
) -> List[np.ndarray]:
    """Fresh effective weights: base plus detour**2 at every intervened vertex."""
    out = list(weights)
    copied = set()
    for iv in interventions:
        if iv.agent not in copied:
            out[iv.agent] = np.array(weights[iv.agent], dtype=np.float64, copy=True)
            copied.add(iv.agent)
        out[iv.agent][iv.v[0], iv.v[1]] += iv.detour**2
    return out


# ---------------------------------------------------------------------------
# temporal resolution
# ---------------------------------------------------------------------------

def select_cover(points: Sequence[CongestionPoint], exact_limit: int = EXACT_LIMIT) -> Tuple[int, ...]:
    return solve_cover([(p.i, p.j) for p in points], exact_limit).agents


def earliest_conflict(agent: int, points: Sequence[CongestionPoint]) -> Tuple[Vertex, int]:
    mine = [(p.h, p.vertex_for(agent)) for p in points if agent in (p.i, p.j)]
    if not mine:
        raise NoConflict(f"agent {agent} has no unresolved conflict")
    h, v = min(mine)
    return v, h


def temporal_gain(h: int, dist: float, cfg: SteamConfig) -> float:
    return cfg.gamma_time / (h + cfg.eps) + cfg.gamma_dist / (dist + cfg.eps)


def temporal_correction(
    grid: GridMap,
    position: Vertex,
    assignment: TemporalAssignment | None,
    field_to_v: CostField | None,
) -> np.ndarray:
    """-lam * max(progress toward the assigned vertex, 0) for each action."""
    delta = np.zeros(N_ACTIONS)
    if assignment is None:
        return delta
    here = field_to_v[position]
    for a in ACTIONS:
        progress = here - field_to_v[next_vertex(grid, position, a)]
        if progress > 0:
            delta[a] = -assignment.lam * progress
    return delta


# ---------------------------------------------------------------------------
# emergent local density
# ---------------------------------------------------------------------------

def density_scores(
    grid: GridMap,
    position: Vertex,
    neighbors: Sequence[Tuple[Vertex, CostField]],
) -> np.ndarray:
    """Per action, how many neighbours would see the successor cell as progress."""
    scores = np.zeros(N_ACTIONS, dtype=np.int64)
    for a in ACTIONS:
        u = next_vertex(grid, position, a)
        for p_j, f_j in neighbors:
            if f_j[u] - f_j[p_j] < 0:
                scores[a] += 1
    return scores


def logit_spread(logits: np.ndarray, blocked_logit: float = 1e6, exclude_blocked: bool = True) -> float:
    vals = np.maximum(np.asarray(logits, dtype=np.float64), -blocked_logit)
    if exclude_blocked:
        vals = vals[vals > -blocked_logit]
    if len(vals) == 0:
        return 0.0
    return float(np.std(vals))


def logit_spread_batch(logits: np.ndarray, blocked_logit: float = 1e6, exclude_blocked: bool = True) -> np.ndarray:
    """Row-wise ``logit_spread`` for an (N, 5) array."""
    vals = np.maximum(np.asarray(logits, dtype=np.float64), -blocked_logit)
    keep = vals > -blocked_logit if exclude_blocked else np.ones(vals.shape, dtype=bool)
    cnt = keep.sum(axis=1)
    safe = np.maximum(cnt, 1)
    mean = np.where(keep, vals, 0.0).sum(axis=1) / safe
    dev = np.where(keep, vals - mean[:, None], 0.0)
    sigma = np.sqrt((dev * dev).sum(axis=1) / safe)
    return np.where(cnt > 0, sigma, 0.0)


def emergent_correction(
    logits_time: np.ndarray,
    scores: np.ndarray,
    alpha: float,
    blocked_logit: float = 1e6,
    exclude_blocked: bool = True,
) -> np.ndarray:
    sigma = logit_spread(logits_time, blocked_logit, exclude_blocked)
    return -alpha * sigma * np.asarray(scores, dtype=np.float64)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass
class RoundResult:
    step: int
    paths: List[PathPlan]
    points: List[CongestionPoint]
    probes: List[ProbeResult]
    interventions: List[SpatialIntervention]
    temporal_points: List[CongestionPoint]
    cover: Tuple[int, ...]
    cover_exact: bool
    assignments: Dict[int, TemporalAssignment] = field(default_factory=dict)


def successor_table(grid: GridMap) -> np.ndarray:
    """(H*W, 5) flat index reached from each cell under each action."""
    table = np.empty((grid.height * grid.width, N_ACTIONS), dtype=np.int64)
    for r in range(grid.height):
        for c in range(grid.width):
            for a in ACTIONS:
                table[r * grid.width + c, a] = grid.index(next_vertex(grid, (r, c), a))
    return table


class SteamController:
    """Per-episode state: cached fields, effective weights, temporal assignments."""

    def __init__(
        self,
        grid: GridMap,
        goals: Sequence[Vertex],
        cfg: SteamConfig,
        base_weights: Sequence[np.ndarray],
        window: int = 11,
        blocked_logit: float = 1e6,
        goal_fields: Sequence[CostField] | None = None,
    ):
        self.grid = grid
        self.goals = [tuple(g) for g in goals]
        self.cfg = cfg
        self.base = list(base_weights)
        self.radius = window // 2
        self.blocked_logit = blocked_logit
        if goal_fields is None:
            goal_fields = [compute_cost_field(grid, w, g) for w, g in zip(self.base, self.goals)]
        self.goal_fields = list(goal_fields)
        self.penalty = cfg.probe_penalty or default_probe_penalty(grid, self.base)
        self.eff_weights = list(self.base)
        self.eff_fields = list(self.goal_fields)
        self.assignments: Dict[int, TemporalAssignment] = {}
        self._v_fields: Dict[Tuple[int, Vertex], CostField] = {}
        self._succ = successor_table(grid)
        self._goal_flat = np.array([grid.index(g) for g in self.goals], dtype=np.int64)
        self._stack_fields()
        self._scores_cache: np.ndarray | None = None
        self.rounds = 0
        self.n_points = 0
        self.n_interventions = 0
        self.n_temporal = 0
        self.n_assignments = 0
        self.approx_covers = 0
        self.last_round: RoundResult | None = None

    def _stack_fields(self):
        self._eff_flat = np.stack([f.cost.ravel() for f in self.eff_fields])

    def _field_to(self, agent: int, v: Vertex) -> CostField:
        key = (id(self.base[agent]), v)
        f = self._v_fields.get(key)
        if f is None:
            f = compute_cost_field(self.grid, self.base[agent], v)
            self._v_fields[key] = f
        return f

    def is_update_step(self, step: int) -> bool:
        return step % self.cfg.update_interval == 0

    def update(self, positions: Sequence[Vertex], step: int) -> RoundResult:
        """Heavy phase: rollout, probe, aggregate, cover."""
        grid, cfg = self.grid, self.cfg
        positions = [tuple(p) for p in positions]
        roll_fields = self.goal_fields if cfg.rollout_weights == "base" else self.eff_fields
        paths = rollout_paths(grid, positions, roll_fields)
        points = detect_congestion(paths, cfg.horizon_cap, grid, cfg.include_swaps)

        base_costs = [f[p] for f, p in zip(self.goal_fields, positions)]
        probes, interventions, temporal = [], [], []
        cache: Dict = {}
        for pt in points:
            if cfg.spatial:
                res = probe_spatial(
                    pt, grid, positions, self.goals, self.base, self.penalty,
                    cfg.min_detour, base_costs, cache,
                )
            else:
                res = ProbeResult(False, None, None, (float("nan"), float("nan")))
            probes.append(res)
            if res.avoidable:
                interventions.append(SpatialIntervention(res.agent, pt.vertex_for(res.agent), res.detour))
            else:
                temporal.append(pt)

        eff_w = aggregate_interventions(interventions, self.base)
        touched = {iv.agent for iv in interventions}
        self.eff_weights = eff_w
        self.eff_fields = [
            compute_cost_field(grid, eff_w[k], self.goals[k]) if k in touched else self.goal_fields[k]
            for k in range(len(self.goals))
        ]
        self._stack_fields()

        cov = solve_cover([(p.i, p.j) for p in temporal], cfg.cover_exact_limit)
        self.assignments = {}
        for k in cov.agents:
            v, h = earliest_conflict(k, temporal)
            dist = self._field_to(k, v)[positions[k]]
            self.assignments[k] = TemporalAssignment(k, v, h, temporal_gain(h, dist, cfg))

        self.rounds += 1
        self.n_points += len(points)
        self.n_interventions += len(interventions)
        self.n_temporal += len(temporal)
        self.n_assignments += len(self.assignments)
        self.approx_covers += 0 if cov.exact else 1
        self._scores_cache = None
        self.last_round = RoundResult(
            step, paths, points, probes, interventions, temporal, cov.agents, cov.exact,
            dict(self.assignments),
        )
        return self.last_round

    def effective_field(self, agent: int) -> CostField:
        return self.eff_fields[agent]

    def time_delta(self, agent: int, position: Vertex) -> np.ndarray:
        asg = self.assignments.get(agent)
        if asg is None:
            return np.zeros(N_ACTIONS)
        return temporal_correction(self.grid, tuple(position), asg, self._field_to(agent, asg.v))

    def all_density_scores(self, positions: Sequence[Vertex]) -> np.ndarray:
        """(N, 5) density scores for every agent at once."""
        grid = self.grid
        pos = np.array([grid.index(p) for p in positions], dtype=np.int64)
        rc = np.array(positions, dtype=np.int64).reshape(-1, 2)
        n = len(pos)
        cheb = np.abs(rc[:, None, :] - rc[None, :, :]).max(axis=-1)
        mask = cheb <= self.radius
        np.fill_diagonal(mask, False)
        mask &= (pos != self._goal_flat)[None, :]
        succ = self._succ[pos]  # (N, 5)
        here = self._eff_flat[np.arange(n), pos]  # (N,)
        # vals[i, a, j] = J_j(succ_i(a)) - J_j(p_j)
        vals = self._eff_flat[np.arange(n)[None, None, :], succ[:, :, None]] - here[None, None, :]
        return ((vals < 0) & mask[:, None, :]).sum(axis=2)

    def density_scores_for(self, positions: Sequence[Vertex], step: int) -> np.ndarray:
        if self.cfg.emergent_every_step or self._scores_cache is None:
            self._scores_cache = self.all_density_scores(positions)
        return self._scores_cache

    def emergent_delta(self, logits_time: np.ndarray, scores: np.ndarray) -> np.ndarray:
        if self.cfg.alpha == 0:
            return np.zeros(N_ACTIONS)
        return emergent_correction(
            logits_time, scores, self.cfg.alpha, self.blocked_logit, self.cfg.sigma_exclude_blocked
        )

    def time_deltas(self, positions: Sequence[Vertex]) -> np.ndarray:
        out = np.zeros((len(positions), N_ACTIONS))
        for k in self.assignments:
            out[k] = self.time_delta(k, positions[k])
        return out

    def emergent_deltas(self, logits_time: np.ndarray, scores: np.ndarray) -> np.ndarray:
        """(N, 5) emergent corrections for all agents at once."""
        if self.cfg.alpha == 0:
            return np.zeros(np.shape(logits_time))
        sigma = logit_spread_batch(logits_time, self.blocked_logit, self.cfg.sigma_exclude_blocked)
        return -self.cfg.alpha * sigma[:, None] * np.asarray(scores, dtype=np.float64)

    def stats(self) -> dict:
        return {
            "rounds": self.rounds,
            "congestion_points": self.n_points,
            "spatial_interventions": self.n_interventions,
            "temporal_points": self.n_temporal,
            "temporal_assignments": self.n_assignments,
            "approximate_covers": self.approx_covers,
        }


def steam_step(
    grid: GridMap,
    positions: Sequence[Vertex],
    goals: Sequence[Vertex],
    base_weights: Sequence[np.ndarray],
    cfg: SteamConfig,
    step: int = 0,
) -> Tuple[RoundResult, SteamController]:
    """One stand-alone update round from scratch (no carried caches)."""
    ctl = SteamController(grid, goals, cfg, base_weights)
    res = ctl.update(positions, step)
    return res, ctl
