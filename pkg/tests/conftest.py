import heapq
import itertools
from collections import deque

import numpy as np
import pytest

from steam_mapf.grid import GridMap, Scenario


# --- independent oracles (no package code inside) --------------------------

def bfs_oracle(blocked, target):
    """Hop distances to ``target`` on the free 4-connected grid; inf if unreachable."""
    h, w = blocked.shape
    dist = np.full((h, w), np.inf)
    if blocked[target]:
        return dist
    dist[target] = 0
    q = deque([target])
    while q:
        r, c = q.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and not blocked[nr, nc] and dist[nr, nc] == np.inf:
                dist[nr, nc] = dist[r, c] + 1
                q.append((nr, nc))
    return dist


def path_exists_avoiding(blocked, start, goal, avoid):
    """DFS: does any start->goal walk exist that never touches ``avoid``?"""
    if start == avoid or goal == avoid:
        return False
    h, w = blocked.shape
    seen = {start}
    stack = [start]
    while stack:
        r, c = stack.pop()
        if (r, c) == goal:
            return True
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            n = (r + dr, c + dc)
            if 0 <= n[0] < h and 0 <= n[1] < w and not blocked[n] and n != avoid and n not in seen:
                seen.add(n)
                stack.append(n)
    return False


def simple_paths(blocked, start, goal):
    """Every simple path from start to goal (small grids only)."""
    h, w = blocked.shape
    out = []

    def rec(v, path, seen):
        if v == goal:
            out.append(list(path))
            return
        r, c = v
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            n = (r + dr, c + dc)
            if 0 <= n[0] < h and 0 <= n[1] < w and not blocked[n] and n not in seen:
                seen.add(n)
                path.append(n)
                rec(n, path, seen)
                path.pop()
                seen.discard(n)

    rec(start, [start], {start})
    return out


def departed_cost(path, weights):
    return float(sum(weights[v] for v in path[:-1]))


def brute_min_cover(pairs):
    """Smallest cover, lexicographically smallest among equals, by full enumeration."""
    nodes = sorted({x for p in pairs for x in p})
    for k in range(len(nodes) + 1):
        for combo in itertools.combinations(nodes, k):
            s = set(combo)
            if all(a in s or b in s for a, b in pairs):
                return tuple(combo)
    return ()


def dijkstra_oracle(weights, target):
    """Textbook heap Dijkstra under the departed-vertex convention."""
    h, w = weights.shape
    dist = np.full((h, w), np.inf)
    if not np.isfinite(weights[target]):
        return dist
    dist[target] = 0.0
    pq = [(0.0, target)]
    while pq:
        d, (r, c) = heapq.heappop(pq)
        if d > dist[r, c]:
            continue
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and np.isfinite(weights[nr, nc]):
                nd = d + weights[nr, nc]
                if nd < dist[nr, nc]:
                    dist[nr, nc] = nd
                    heapq.heappush(pq, (nd, (nr, nc)))
    return dist


# --- fixtures ---------------------------------------------------------------

@pytest.fixture
def corridor():
    grid = GridMap.empty(1, 5)
    return Scenario(grid, (((0, 0), (0, 4)), ((0, 4), (0, 0))), seed=0, max_steps=32)


@pytest.fixture
def swap3():
    grid = GridMap.empty(3, 3)
    return Scenario(grid, (((1, 0), (1, 2)), ((1, 2), (1, 0))), seed=0, max_steps=32)


def random_blocked(rng, h, w, density):
    return rng.random((h, w)) < density


# --- acceptance summary -----------------------------------------------------

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
