"""Weighted cost-to-go fields over the grid.

Path-cost convention: the cost of a path is the sum of the weights of every
vertex it *leaves*, i.e. every vertex except the target. A field therefore
satisfies ``cost(v) = weight(v) + min_u cost(u)`` over free neighbours ``u``
of ``v`` and ``cost(target) = 0``. A penalized vertex thus carries its own
penalty in its cost-to-go, which is what makes it look expensive in a local
cost channel.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import _kernels
from .errors import CenterUnreachable, TargetBlocked, Unreachable
from .grid import GridMap, Vertex


def base_weights(grid: GridMap) -> np.ndarray:
    """Unit weight on free cells, +inf on obstacles."""
    w = np.ones(grid.shape, dtype=np.float64)
    w[grid.blocked] = np.inf
    return w


def weights_id(w: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(w).tobytes(), digest_size=8).hexdigest()


@dataclass(frozen=True, eq=False)
class CostField:
    cost: np.ndarray  # (height, width)
    target: Vertex
    weights_id: str

    def __getitem__(self, v: Vertex) -> float:
        return float(self.cost[v[0], v[1]])

    @property
    def shape(self):
        return self.cost.shape


def compute_cost_field(grid: GridMap, w: np.ndarray, target: Vertex) -> CostField:
    target = (int(target[0]), int(target[1]))
    if not grid.is_free(target):
        raise TargetBlocked(f"target {target} is blocked or out of bounds")
    flat_w = np.ascontiguousarray(w, dtype=np.float64).ravel()
    flat = _kernels.dijkstra(flat_w, grid.height, grid.width, grid.index(target))
    cost = flat.reshape(grid.shape)
    cost.setflags(write=False)
    return CostField(cost, target, weights_id(flat_w))


@dataclass(frozen=True)
class PathPlan:
    vertices: Tuple[Vertex, ...]

    def __len__(self):
        return len(self.vertices)

    def at(self, h: int) -> Vertex:
        """Vertex after ``h`` steps; the agent rests on the last vertex afterwards."""
        if h < len(self.vertices):
            return self.vertices[h]
        return self.vertices[-1]

    @property
    def start(self) -> Vertex:
        return self.vertices[0]

    @property
    def end(self) -> Vertex:
        return self.vertices[-1]

    def cost(self, w: np.ndarray) -> float:
        return float(sum(w[v[0], v[1]] for v in self.vertices[:-1]))


def extract_path_indices(grid: GridMap, field: CostField, start: Vertex) -> np.ndarray:
    flat = _kernels.descend(
        np.ascontiguousarray(field.cost).ravel(),
        grid.height,
        grid.width,
        grid.index(start),
    )
    if len(flat) == 0:
        raise Unreachable(f"{start} cannot reach {field.target}")
    return flat


def extract_path(grid: GridMap, field: CostField, start: Vertex) -> PathPlan:
    """Greedy descent on ``field``; ties go Up, Down, Left, Right."""
    flat = extract_path_indices(grid, field, start)
    width = grid.width
    return PathPlan(tuple((int(i) // width, int(i) % width) for i in flat))


def local_channel(field: CostField, center: Vertex, window: int, blocked: np.ndarray | None = None) -> np.ndarray:
    """Window of costs relative to ``center``; +inf outside the map or where unreachable."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    c0 = field.cost[center[0], center[1]]
    if not np.isfinite(c0):
        raise CenterUnreachable(f"center {center} cannot reach {field.target}")
    rad = window // 2
    h, w = field.cost.shape
    out = np.full((window, window), np.inf)
    r0, r1 = max(center[0] - rad, 0), min(center[0] + rad + 1, h)
    q0, q1 = max(center[1] - rad, 0), min(center[1] + rad + 1, w)
    patch = field.cost[r0:r1, q0:q1] - c0
    if blocked is not None:
        patch = np.where(blocked[r0:r1, q0:q1], np.inf, patch)
    out[r0 - center[0] + rad : r1 - center[0] + rad, q0 - center[1] + rad : q1 - center[1] + rad] = patch
    return out
