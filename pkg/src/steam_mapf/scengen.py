"""Seeded generators for random, maze and warehouse scenarios."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np
from scipy import ndimage

from .errors import Infeasible
from .grid import GridMap, Scenario

FAMILIES = ("random", "maze", "warehouse")
DEFAULT_SIZE = {"random": (32, 32), "maze": (40, 40), "warehouse": (33, 46)}  # (height, width)
MAX_RETRIES = 64


@dataclass
class GenSpec:
    family: str = "random"
    width: Optional[int] = None
    height: Optional[int] = None
    obstacle_density: float = 0.2
    agent_count: int = 16
    seed: int = 0
    max_steps: int = 256

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown map family {self.family!r}")
        dh, dw = DEFAULT_SIZE[self.family]
        if self.height is None:
            self.height = dh
        if self.width is None:
            self.width = dw
        if self.width < 1 or self.height < 1:
            raise ValueError("map dimensions must be positive")
        if not 0.0 <= self.obstacle_density < 1.0:
            raise ValueError("obstacle_density must be in [0, 1)")
        if self.agent_count < 1:
            raise ValueError("agent_count must be positive")
        if 2 * self.agent_count > self.width * self.height:
            raise ValueError("agent_count exceeds half the cells")

    def to_dict(self) -> dict:
        return asdict(self)


def _components(free: np.ndarray):
    labels, n = ndimage.label(free)  # default structure is 4-connectivity
    if n == 0:
        return labels, np.zeros(1, dtype=np.int64)
    return labels, np.bincount(labels.ravel())


def _largest_component(free: np.ndarray) -> np.ndarray:
    labels, sizes = _components(free)
    if len(sizes) <= 1:
        return np.zeros_like(free)
    sizes = sizes.copy()
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def _random_map(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.random((spec.height, spec.width)) < spec.obstacle_density


# --- maze -------------------------------------------------------------------

def _divide(rng, h_open, v_open, r0, c0, r1, c1):
    """Recursive division over lattice cells [r0, r1) x [c0, c1).

    ``h_open[r, c]`` is the passage between cell (r, c) and (r+1, c);
    ``v_open[r, c]`` between (r, c) and (r, c+1).
    """
    stack = [(r0, c0, r1, c1)]
    while stack:
        r0, c0, r1, c1 = stack.pop()
        rows, cols = r1 - r0, c1 - c0
        if rows < 2 and cols < 2:
            continue
        horizontal = rows > cols or (rows == cols and rng.random() < 0.5)
        if cols < 2:
            horizontal = True
        elif rows < 2:
            horizontal = False
        if horizontal:
            cut = int(rng.integers(r0, r1 - 1))
            door = int(rng.integers(c0, c1))
            h_open[cut, c0:c1] = False
            h_open[cut, door] = True
            stack.append((r0, c0, cut + 1, c1))
            stack.append((cut + 1, c0, r1, c1))
        else:
            cut = int(rng.integers(c0, c1 - 1))
            door = int(rng.integers(r0, r1))
            v_open[r0:r1, cut] = False
            v_open[door, cut] = True
            stack.append((r0, c0, r1, cut + 1))
            stack.append((r0, cut + 1, r1, c1))


_RING = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]


def _simple_point(free: np.ndarray, r: int, c: int) -> bool:
    """True if blocking (r, c) keeps its free 4-neighbours connected.

    Consecutive cells on the 3x3 ring are 4-adjacent, so the test is that
    exactly one run of free ring cells contains 4-neighbours of (r, c).
    """
    h, w = free.shape
    vals = [0 <= r + dr < h and 0 <= c + dc < w and bool(free[r + dr, c + dc]) for dr, dc in _RING]
    if not any(vals[k] for k in (1, 3, 5, 7)):
        return False
    if all(vals):
        return True
    start = vals.index(False)
    edge_runs = 0
    in_run = has_edge = False
    for step in range(1, 9):
        i = (start + step) % 8
        if vals[i]:
            if not in_run:
                in_run, has_edge = True, False
            has_edge = has_edge or i % 2 == 1
        elif in_run:
            edge_runs += has_edge
            in_run = False
    return edge_runs == 1


def _maze_map(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    corridor = int(rng.integers(1, 3))  # 1 or 2
    pitch = corridor + 1
    n_r = max((spec.height + 1) // pitch, 1)
    n_c = max((spec.width + 1) // pitch, 1)
    h_open = np.ones((max(n_r - 1, 0) + 1, n_c), dtype=bool)
    v_open = np.ones((n_r, max(n_c - 1, 0) + 1), dtype=bool)
    _divide(rng, h_open, v_open, 0, 0, n_r, n_c)

    free = np.zeros((spec.height, spec.width), dtype=bool)
    for a in range(n_r):
        for b in range(n_c):
            r, c = a * pitch, b * pitch
            free[r : r + corridor, c : c + corridor] = True
            if a + 1 < n_r and h_open[a, b]:
                free[r + corridor, c : c + corridor] = True
            if b + 1 < n_c and v_open[a, b]:
                free[r : r + corridor, c + corridor] = True
    free = _largest_component(free)

    # tune the blocked fraction: open walls next to corridors (braiding) or
    # fill simple points (dead ends first shrink away)
    total = spec.height * spec.width
    target_blocked = int(round(spec.obstacle_density * total))
    blocked = total - int(free.sum())
    if blocked > target_blocked:
        for _ in range(4):
            cand = np.argwhere(~free)
            rng.shuffle(cand)
            for r, c in cand:
                if blocked <= target_blocked:
                    break
                if _touches_free(free, r, c):
                    free[r, c] = True
                    blocked -= 1
            if blocked <= target_blocked:
                break
    elif blocked < target_blocked:
        for _ in range(16):
            progress = False
            cand = np.argwhere(free)
            rng.shuffle(cand)
            for r, c in cand:
                if blocked >= target_blocked:
                    break
                if free[r, c] and _simple_point(free, r, c):
                    free[r, c] = False
                    blocked += 1
                    progress = True
            if blocked >= target_blocked or not progress:
                break
    return ~free


def _touches_free(free, r, c) -> bool:
    h, w = free.shape
    return (
        (r > 0 and free[r - 1, c])
        or (r < h - 1 and free[r + 1, c])
        or (c > 0 and free[r, c - 1])
        or (c < w - 1 and free[r, c + 1])
    )


# --- warehouse --------------------------------------------------------------

def warehouse_template(height: int = 33, width: int = 46, shelf_h: int = 2, shelf_w: int = 5,
                       aisle: int = 1, cross_every: int = 3, margin: int = 2) -> np.ndarray:
    """Blocked grid of 2x5 shelf blocks separated by 1-wide aisles.

    A 2-wide cross aisle is left open after every ``cross_every`` shelf rows;
    an open margin rings the storage area.
    """
    blocked = np.zeros((height, width), dtype=bool)
    r = margin
    shelf_rows = 0
    while r + shelf_h <= height - margin:
        c = margin
        while c + shelf_w <= width - margin:
            blocked[r : r + shelf_h, c : c + shelf_w] = True
            c += shelf_w + aisle
        shelf_rows += 1
        r += shelf_h + (2 if shelf_rows % cross_every == 0 else aisle)
    return blocked


def _warehouse_map(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    aisle = int(rng.integers(1, 3))
    return warehouse_template(spec.height, spec.width, aisle=aisle)


def generate(spec: GenSpec) -> Scenario:
    """Same spec, same scenario."""
    rng = np.random.default_rng(spec.seed)
    builders = {"random": _random_map, "maze": _maze_map, "warehouse": _warehouse_map}
    for _ in range(MAX_RETRIES):
        blocked = builders[spec.family](spec, rng)
        comp = _largest_component(~blocked)
        cells = np.argwhere(comp)
        if len(cells) < 2 * spec.agent_count:
            continue
        pick = rng.choice(len(cells), size=2 * spec.agent_count, replace=False)
        chosen = [(int(r), int(c)) for r, c in cells[pick]]
        starts, goals = chosen[: spec.agent_count], chosen[spec.agent_count :]
        grid = GridMap(spec.width, spec.height, blocked)
        return Scenario(grid, tuple(zip(starts, goals)), seed=spec.seed, max_steps=spec.max_steps)
    raise Infeasible(
        f"could not place {spec.agent_count} agents on a {spec.family} "
        f"{spec.height}x{spec.width} map after {MAX_RETRIES} attempts"
    )


def episode_seed(master: int, episode: int) -> int:
    return (int(master) ^ int(episode)) & 0xFFFFFFFFFFFFFFFF


def generate_batch(spec: GenSpec, episodes: int) -> List[Scenario]:
    out = []
    for e in range(episodes):
        d = spec.to_dict()
        d["seed"] = episode_seed(spec.seed, e)
        out.append(generate(GenSpec(**d)))
    return out
