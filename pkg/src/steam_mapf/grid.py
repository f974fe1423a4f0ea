"""Static grid environment: maps, actions, scenarios, conflict predicates."""

from __future__ import annotations

import enum
import json
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateGoal,
    DuplicateStart,
    GoalUnreachable,
    LengthMismatch,
    MalformedHeader,
    StartOnObstacle,
    UnknownCell,
)

Vertex = Tuple[int, int]

FREE_CHARS = frozenset(".GS")
BLOCKED_CHARS = frozenset("@OTW")


class Action(enum.IntEnum):
    WAIT = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4


ACTIONS = tuple(Action)
N_ACTIONS = len(ACTIONS)
ACTION_DELTAS = {
    Action.WAIT: (0, 0),
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
}
ACTION_NAMES = tuple(a.name.lower() for a in ACTIONS)


@dataclass(frozen=True, eq=False)
class GridMap:
    width: int
    height: int
    blocked: np.ndarray  # (height, width) bool

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("map dimensions must be positive")
        arr = np.array(self.blocked, dtype=bool).reshape(self.height, self.width)
        arr.setflags(write=False)
        object.__setattr__(self, "blocked", arr)

    @classmethod
    def empty(cls, height: int, width: int) -> "GridMap":
        return cls(width, height, np.zeros((height, width), dtype=bool))

    @classmethod
    def from_rows(cls, rows: Sequence[str]) -> "GridMap":
        """Build from rows of map characters (no header)."""
        height, width = len(rows), len(rows[0])
        blocked = np.zeros((height, width), dtype=bool)
        for r, row in enumerate(rows):
            if len(row) != width:
                raise DimensionMismatch(f"row {r} has length {len(row)}, expected {width}")
            for c, ch in enumerate(row):
                blocked[r, c] = _cell_blocked(ch, r, c)
        return cls(width, height, blocked)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.blocked, other.blocked)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.blocked.tobytes()))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def in_bounds(self, v: Vertex) -> bool:
        return 0 <= v[0] < self.height and 0 <= v[1] < self.width

    def is_free(self, v: Vertex) -> bool:
        return self.in_bounds(v) and not self.blocked[v[0], v[1]]

    def index(self, v: Vertex) -> int:
        return v[0] * self.width + v[1]

    def vertex(self, idx: int) -> Vertex:
        return divmod(int(idx), self.width)

    def free_cells(self) -> List[Vertex]:
        return [(int(r), int(c)) for r, c in zip(*np.nonzero(~self.blocked))]

    def neighbors(self, v: Vertex) -> List[Vertex]:
        out = []
        for a in ACTIONS[1:]:
            dr, dc = ACTION_DELTAS[a]
            u = (v[0] + dr, v[1] + dc)
            if self.is_free(u):
                out.append(u)
        return out

    def to_text(self) -> str:
        rows = ["".join("@" if b else "." for b in row) for row in self.blocked]
        return "type octile\nheight %d\nwidth %d\nmap\n%s\n" % (
            self.height,
            self.width,
            "\n".join(rows),
        )


def _cell_blocked(ch: str, r: int, c: int) -> bool:
    if ch in BLOCKED_CHARS:
        return True
    if ch in FREE_CHARS:
        return False
    raise UnknownCell(f"unrecognized map character {ch!r} at ({r},{c})")


def parse_map(text: str | Iterable[str]) -> GridMap:
    """Parse a MovingAI-style map.

    Header lines (``type``, ``height H``, ``width W``) precede a ``map`` line;
    then H rows of W characters follow.
    """
    lines = text.splitlines() if isinstance(text, str) else [ln.rstrip("\n") for ln in text]
    header = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.lower() == "map":
            break
        key, _, value = line.partition(" ")
        header[key.lower()] = value.strip()
    else:
        raise MalformedHeader("missing 'map' line")
    try:
        height = int(header["height"])
        width = int(header["width"])
    except KeyError as exc:
        raise MalformedHeader(f"missing {exc.args[0]!r} line") from None
    except ValueError:
        raise MalformedHeader("height/width must be integers") from None
    if height < 1 or width < 1:
        raise MalformedHeader("height and width must be positive")

    rows = [ln.rstrip("\r") for ln in lines[i:]]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) != height:
        raise DimensionMismatch(f"header says height {height}, found {len(rows)} rows")
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DimensionMismatch(f"header says width {width}, row {r} has {len(row)}")
    return GridMap.from_rows(rows)


def next_vertex(grid: GridMap, v: Vertex, a: Action) -> Vertex:
    """Cell reached from ``v`` by ``a``; invalid moves degrade to staying put."""
    dr, dc = ACTION_DELTAS[Action(a)]
    u = (v[0] + dr, v[1] + dc)
    if grid.is_free(u):
        return u
    return v


class ConflictKind(enum.Enum):
    VERTEX = "vertex"
    SWAP = "swap"


@dataclass(frozen=True)
class Conflict:
    i: int
    j: int
    kind: ConflictKind


def find_transition_conflicts(prev: Sequence[Vertex], nxt: Sequence[Vertex]) -> List[Conflict]:
    if len(prev) != len(nxt):
        raise LengthMismatch(f"{len(prev)} previous vs {len(nxt)} next positions")
    prev = [tuple(p) for p in prev]
    nxt = [tuple(p) for p in nxt]
    out = []
    by_target = {}
    for i, v in enumerate(nxt):
        by_target.setdefault(v, []).append(i)
    for idx in by_target.values():
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                out.append(Conflict(idx[a], idx[b], ConflictKind.VERTEX))
    prev_owner = {v: i for i, v in enumerate(prev)}
    for i, v in enumerate(nxt):
        j = prev_owner.get(v)
        if j is not None and j > i and nxt[j] == prev[i] and v != prev[i]:
            out.append(Conflict(i, j, ConflictKind.SWAP))
    out.sort(key=lambda c: (c.i, c.j, c.kind.value))
    return out


@dataclass(frozen=True, eq=False)
class Scenario:
    map: GridMap
    agents: Tuple[Tuple[Vertex, Vertex], ...]
    seed: int = 0
    max_steps: int = 256
    map_path: str | None = field(default=None, compare=False)

    def __post_init__(self):
        agents = tuple((tuple(map(int, s)), tuple(map(int, g))) for s, g in self.agents)
        object.__setattr__(self, "agents", agents)

    @property
    def starts(self) -> List[Vertex]:
        return [s for s, _ in self.agents]

    @property
    def goals(self) -> List[Vertex]:
        return [g for _, g in self.agents]

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.map == other.map
            and self.agents == other.agents
            and self.seed == other.seed
            and self.max_steps == other.max_steps
        )

    def to_dict(self, map_path: str | None = None) -> dict:
        return {
            "map_path": map_path if map_path is not None else self.map_path,
            "agents": [[s[0], s[1], g[0], g[1]] for s, g in self.agents],
            "seed": int(self.seed),
            "max_steps": int(self.max_steps),
        }


def bfs_distances(grid: GridMap, source: Vertex) -> dict:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in grid.neighbors(u):
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def validate_scenario(s: Scenario) -> None:
    """Raise the first violated scenario invariant, naming the agent index."""
    seen_starts, seen_goals = {}, {}
    for k, (start, goal) in enumerate(s.agents):
        if not s.map.is_free(start):
            raise StartOnObstacle(k, f"start {start} is not a free cell")
        if start in seen_starts:
            raise DuplicateStart(k, f"start {start} also used by agent {seen_starts[start]}")
        seen_starts[start] = k
        if goal in seen_goals:
            raise DuplicateGoal(k, f"goal {goal} also used by agent {seen_goals[goal]}")
        seen_goals[goal] = k
    for k, (start, goal) in enumerate(s.agents):
        if not s.map.is_free(goal):
            raise GoalUnreachable(k, f"goal {goal} is not a free cell")
        if goal not in bfs_distances(s.map, start):
            raise GoalUnreachable(k, f"goal {goal} not reachable from {start}")


def load_map(path: str | os.PathLike) -> GridMap:
    with open(path, encoding="utf-8") as fh:
        return parse_map(fh.read())


def load_scenario(path: str | os.PathLike) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    map_path = doc["map_path"]
    resolved = map_path
    if not os.path.isabs(map_path):
        resolved = os.path.join(os.path.dirname(os.path.abspath(path)), map_path)
    grid = load_map(resolved)
    agents = [((a[0], a[1]), (a[2], a[3])) for a in doc["agents"]]
    return Scenario(
        grid,
        tuple(agents),
        seed=int(doc.get("seed", 0)),
        max_steps=int(doc.get("max_steps", 256)),
        map_path=map_path,
    )


def save_scenario(s: Scenario, path: str | os.PathLike, map_path: str) -> None:
    """Write the scenario JSON; ``map_path`` is stored verbatim (relative to ``path``'s dir)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(s.to_dict(map_path), fh, indent=1)
        fh.write("\n")
