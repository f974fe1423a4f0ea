"""Minimum vertex cover over conflict pairs.

Exact search up to ``exact_limit`` involved agents returns the lexicographically
smallest minimum cover; larger instances fall back to the better of a
max-degree greedy cover and a maximal-matching cover (the latter bounds the
result at twice the optimum).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Tuple

EXACT_LIMIT = 24


@dataclass(frozen=True)
class CoverResult:
    agents: Tuple[int, ...]
    exact: bool


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _bits(x: int) -> List[int]:
    out = []
    while x:
        low = x & -x
        out.append(low.bit_length() - 1)
        x ^= low
    return out


def _matching_bound(adj: List[int], alive: int) -> int:
    # size of a greedy maximal matching is a lower bound on any cover
    free = alive
    size = 0
    for v in _bits(alive):
        if not (free >> v) & 1:
            continue
        nb = adj[v] & free & ~(1 << v)
        if nb:
            u = (nb & -nb).bit_length() - 1
            free &= ~((1 << v) | (1 << u))
            size += 1
    return size


def _min_cover_size(adj: List[int], alive: int, limit: int) -> int:
    """Branch and bound with degree-0/degree-1 reductions; returns min(limit, optimum)."""
    taken = 0
    changed = True
    while changed:
        changed = False
        for v in _bits(alive):
            if not (alive >> v) & 1:
                continue
            nb = adj[v] & alive
            deg = _popcount(nb)
            if deg == 0:
                alive &= ~(1 << v)
                changed = True
            elif deg == 1:
                # some minimum cover always takes the leaf's neighbour
                alive &= ~(nb | (1 << v))
                taken += 1
                changed = True
    if alive == 0:
        return min(limit, taken)
    if taken + _matching_bound(adj, alive) >= limit:
        return limit
    # branch on a max-degree vertex: take it, or take all its neighbours
    v = max(_bits(alive), key=lambda x: (_popcount(adj[x] & alive), -x))
    nb = adj[v] & alive
    best = limit
    sub = _min_cover_size(adj, alive & ~(1 << v), best - taken - 1)
    best = min(best, taken + 1 + sub)
    k = _popcount(nb)
    if taken + k < best:
        sub = _min_cover_size(adj, alive & ~nb & ~(1 << v), best - taken - k)
        best = min(best, taken + k + sub)
    return best


def _lex_search(adj: List[int], n: int, alive: int, budget: int):
    x = -1
    for v in range(n):
        if (alive >> v) & 1 and adj[v] & alive:
            x = v
            break
    if x < 0:
        return []
    if budget <= 0 or _matching_bound(adj, alive) > budget:
        return None
    rest = _lex_search(adj, n, alive & ~(1 << x), budget - 1)
    if rest is not None:
        return [x] + rest
    nb = adj[x] & alive
    k = _popcount(nb)
    if k <= budget:
        rest = _lex_search(adj, n, alive & ~nb & ~(1 << x), budget - k)
        if rest is not None:
            return _bits(nb) + rest
    return None


def _approx_cover(nodes: List[int], edges: List[Tuple[int, int]]) -> Tuple[int, ...]:
    adj = {v: set() for v in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)

    live = {v: set(ns) for v, ns in adj.items()}
    greedy = set()
    while True:
        v = max(live, key=lambda x: (len(live[x]), -x), default=None)
        if v is None or not live[v]:
            break
        greedy.add(v)
        for u in live.pop(v):
            live[u].discard(v)
    # drop vertices whose edges are all covered by the rest
    for v in sorted(greedy, reverse=True):
        if adj[v] <= greedy - {v}:
            greedy.discard(v)

    matched = set()
    for a, b in sorted(edges):
        if a not in matched and b not in matched:
            matched.update((a, b))

    best = greedy if len(greedy) <= len(matched) else matched
    return tuple(sorted(best))


def solve_cover(pairs: Iterable[Tuple[int, int]], exact_limit: int = EXACT_LIMIT) -> CoverResult:
    edges = sorted({(min(a, b), max(a, b)) for a, b in pairs if a != b})
    if not edges:
        return CoverResult((), True)
    nodes = sorted({v for e in edges for v in e})
    if len(nodes) > exact_limit:
        return CoverResult(_approx_cover(nodes, edges), False)

    pos = {v: k for k, v in enumerate(nodes)}
    n = len(nodes)
    adj = [0] * n
    for a, b in edges:
        adj[pos[a]] |= 1 << pos[b]
        adj[pos[b]] |= 1 << pos[a]
    alive = (1 << n) - 1
    k = _min_cover_size(adj, alive, n)
    found = _lex_search(adj, n, alive, k)
    assert found is not None and len(found) == k
    return CoverResult(tuple(sorted(nodes[i] for i in found)), True)


def select_cover(pairs: Iterable[Tuple[int, int]], exact_limit: int = EXACT_LIMIT) -> Tuple[int, ...]:
    return solve_cover(pairs, exact_limit).agents


def is_cover(cover: Iterable[int], pairs: Iterable[Tuple[int, int]]) -> bool:
    s = set(cover)
    return all(a in s or b in s for a, b in pairs)
