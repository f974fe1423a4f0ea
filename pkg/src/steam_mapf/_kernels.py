"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a plain Python/numpy
version with identical semantics. ``STEAM_MAPF_NUMBA=0`` (or a missing numba
install) selects the fallback at import time. Both variants stay importable as
``<name>_jit`` / ``<name>_py`` so tests and the benchmark can compare them.

Grids are passed flattened (row-major) with explicit ``height``/``width``.
Neighbour order is Up, Down, Left, Right everywhere; it is the tie-break order.
"""

import heapq
import os

import numpy as np

_flag = os.environ.get("STEAM_MAPF_NUMBA", "1").strip().lower()
_WANT_NUMBA = _flag not in ("0", "false", "off", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _WANT_NUMBA

# (drow, dcol) for Up, Down, Left, Right
_DR = np.array([-1, 1, 0, 0], dtype=np.int64)
_DC = np.array([0, 0, -1, 1], dtype=np.int64)


def _njit(fn):
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn  # pragma: no cover


# ---------------------------------------------------------------------------
# Dijkstra cost-to-target field (departed-vertex convention)
# ---------------------------------------------------------------------------

def _dijkstra_body(weights, height, width, target, stop):
    # stop >= 0 ends the search once that vertex is settled
    n = height * width
    cost = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    cost[target] = 0.0
    heap = [(0.0, target)]
    while len(heap) > 0:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == stop:
            break
        ur = u // width
        uc = u - ur * width
        for k in range(4):
            r = ur + _DR[k]
            c = uc + _DC[k]
            if r < 0 or r >= height or c < 0 or c >= width:
                continue
            v = r * width + c
            if done[v] or not np.isfinite(weights[v]):
                continue
            # leaving v costs w(v)
            step = d + weights[v]
            if step < cost[v]:
                cost[v] = step
                heapq.heappush(heap, (step, v))
    return cost


_dijkstra_jit = _njit(_dijkstra_body)


def dijkstra_jit(weights, height, width, target, stop=-1):
    return _dijkstra_jit(weights, height, width, target, stop)


def dijkstra_py(weights, height, width, target, stop=-1):
    w = weights.tolist()
    n = height * width
    cost = [float("inf")] * n
    done = [False] * n
    cost[target] = 0.0
    heap = [(0.0, target)]
    inf = float("inf")
    pop, push = heapq.heappop, heapq.heappush
    while heap:
        d, u = pop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == stop:
            break
        ur, uc = divmod(u, width)
        for ok, v in (
            (ur > 0, u - width),
            (ur < height - 1, u + width),
            (uc > 0, u - 1),
            (uc < width - 1, u + 1),
        ):
            if ok and not done[v] and w[v] != inf:
                step = d + w[v]
                if step < cost[v]:
                    cost[v] = step
                    push(heap, (step, v))
    return np.array(cost, dtype=np.float64)


# ---------------------------------------------------------------------------
# Greedy descent along a cost field
# ---------------------------------------------------------------------------

def _descend_body(cost, height, width, start):
    # returns flat indices start..target; empty array if start unreachable
    out = np.empty(height * width + 1, dtype=np.int64)
    if not np.isfinite(cost[start]):
        return out[:0]
    n = 0
    u = start
    out[n] = u
    n += 1
    while cost[u] > 0.0:
        ur = u // width
        uc = u - ur * width
        best = -1
        best_val = np.inf
        for k in range(4):
            r = ur + _DR[k]
            c = uc + _DC[k]
            if r < 0 or r >= height or c < 0 or c >= width:
                continue
            v = r * width + c
            val = cost[v]
            if val < best_val:
                best_val = val
                best = v
        if best < 0 or n > height * width:
            return out[:0]
        u = best
        out[n] = u
        n += 1
    return out[:n].copy()


descend_jit = _njit(_descend_body)


def descend_py(cost, height, width, start):
    cost_l = cost.tolist()
    inf = float("inf")
    if cost_l[start] == inf:
        return np.empty(0, dtype=np.int64)
    out = [start]
    u = start
    limit = height * width
    while cost_l[u] > 0.0:
        ur, uc = divmod(u, width)
        best, best_val = -1, inf
        for ok, v in (
            (ur > 0, u - width),
            (ur < height - 1, u + width),
            (uc > 0, u - 1),
            (uc < width - 1, u + 1),
        ):
            if ok:
                val = cost_l[v]
                if val < best_val:
                    best_val, best = val, v
        if best < 0 or len(out) > limit:
            return np.empty(0, dtype=np.int64)
        u = best
        out.append(u)
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Same-vertex coincidences among rolled-out paths
# ---------------------------------------------------------------------------

def _coincidences_body(traj):
    # traj[i, h] = flat vertex of agent i at offset h; returns rows (h, i, j)
    n_agents, n_off = traj.shape
    cap = 16
    out = np.empty((cap, 3), dtype=np.int64)
    m = 0
    for h in range(1, n_off):
        col = traj[:, h]
        order = np.argsort(col, kind="mergesort")
        s = 0
        while s < n_agents:
            e = s + 1
            while e < n_agents and col[order[e]] == col[order[s]]:
                e += 1
            if e - s > 1:
                grp = np.sort(order[s:e])
                for a in range(e - s):
                    for b in range(a + 1, e - s):
                        if m == cap:
                            bigger = np.empty((cap * 2, 3), dtype=np.int64)
                            bigger[:cap] = out
                            out = bigger
                            cap *= 2
                        out[m, 0] = h
                        out[m, 1] = grp[a]
                        out[m, 2] = grp[b]
                        m += 1
            s = e
    return out[:m].copy()


coincidences_jit = _njit(_coincidences_body)


def coincidences_py(traj):
    n_agents, n_off = traj.shape
    rows = []
    if n_agents < 2:
        return np.empty((0, 3), dtype=np.int64)
    ii, jj = np.triu_indices(n_agents, k=1)
    # (pairs, offsets) equality mask; offset 0 is the current state, skipped
    hit = traj[ii, 1:] == traj[jj, 1:]
    p_idx, h_idx = np.nonzero(hit)
    if len(p_idx):
        rows = np.stack([h_idx + 1, ii[p_idx], jj[p_idx]], axis=1).astype(np.int64)
        order = np.lexsort((rows[:, 2], rows[:, 1], rows[:, 0]))
        return rows[order]
    return np.empty((0, 3), dtype=np.int64)


# ---------------------------------------------------------------------------
# Local agent density over a trajectory
# ---------------------------------------------------------------------------

def _density_body(traj, radius, chebyshev):
    # traj: (T+1, N, 2); steps 1..T count
    n_steps = traj.shape[0] - 1
    n = traj.shape[1]
    # integer pair count, divided once, so both variants round identically
    cnt = 0
    for t in range(1, n_steps + 1):
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                dr = abs(traj[t, i, 0] - traj[t, j, 0])
                dc = abs(traj[t, i, 1] - traj[t, j, 1])
                d = max(dr, dc) if chebyshev else dr + dc
                if d <= radius:
                    cnt += 1
    return cnt / ((n - 1) * n_steps * n)


density_jit = _njit(_density_body)


def density_py(traj, radius, chebyshev):
    n_steps = traj.shape[0] - 1
    n = traj.shape[1]
    pos = traj[1:].astype(np.int64)
    diff = np.abs(pos[:, :, None, :] - pos[:, None, :, :])
    dist = diff.max(axis=-1) if chebyshev else diff.sum(axis=-1)
    near = dist <= radius
    # drop self-pairs on the diagonal
    cnt = int(near.sum()) - n_steps * n
    return cnt / ((n - 1) * n_steps * n)


if USE_NUMBA:
    dijkstra = dijkstra_jit
    descend = descend_jit
    coincidences = coincidences_jit
    density = density_jit
else:
    dijkstra = dijkstra_py
    descend = descend_py
    coincidences = coincidences_py
    density = density_py

BACKEND = "numba" if USE_NUMBA else "python"
