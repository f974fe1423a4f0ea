import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from steam_mapf.costfield import (
    PathPlan,
    base_weights,
    compute_cost_field,
    extract_path,
    local_channel,
)
from steam_mapf.errors import CenterUnreachable, TargetBlocked, Unreachable
from steam_mapf.grid import GridMap

from conftest import bfs_oracle, departed_cost, dijkstra_oracle, simple_paths


def test_empty_3x3_manhattan():
    g = GridMap.empty(3, 3)
    f = compute_cost_field(g, base_weights(g), (2, 2))
    assert f[(0, 0)] == 4
    assert f[(2, 2)] == 0


def test_weighted_center_detour_matches_enumeration():
    g = GridMap.empty(3, 3)
    w = base_weights(g)
    w[1, 1] = 5
    f = compute_cost_field(g, w, (1, 2))
    oracle = min(departed_cost(p, w) for p in simple_paths(g.blocked, (1, 0), (1, 2)))
    assert oracle == 4
    assert f[(1, 0)] == oracle


def test_target_blocked():
    g = GridMap.from_rows([".@"])
    with pytest.raises(TargetBlocked):
        compute_cost_field(g, base_weights(g), (0, 1))


def test_unreachable_is_inf():
    g = GridMap.from_rows([".@."])
    f = compute_cost_field(g, base_weights(g), (0, 2))
    assert f[(0, 0)] == np.inf and f[(0, 1)] == np.inf


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), h=st.integers(1, 12), w=st.integers(1, 12))
def test_unit_weights_match_bfs(seed, h, w):
    rng = np.random.default_rng(seed)
    blocked = rng.random((h, w)) < 0.3
    free = np.argwhere(~blocked)
    if len(free) == 0:
        return
    t = tuple(int(x) for x in free[rng.integers(len(free))])
    g = GridMap(w, h, blocked)
    f = compute_cost_field(g, base_weights(g), t)
    np.testing.assert_array_equal(f.cost, bfs_oracle(blocked, t))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_weighted_matches_heap_dijkstra(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(2, 10, size=2)
    blocked = rng.random((h, w)) < 0.25
    free = np.argwhere(~blocked)
    if len(free) == 0:
        return
    weights = rng.uniform(0.5, 4.0, size=(h, w))
    weights[blocked] = np.inf
    t = tuple(int(x) for x in free[0])
    g = GridMap(int(w), int(h), blocked)
    f = compute_cost_field(g, weights, t)
    np.testing.assert_allclose(f.cost, dijkstra_oracle(weights, t), rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_raising_a_weight_never_lowers_costs(seed):
    rng = np.random.default_rng(seed)
    g = GridMap(8, 8, rng.random((8, 8)) < 0.2)
    free = g.free_cells()
    if len(free) < 2:
        return
    w = base_weights(g)
    t = free[rng.integers(len(free))]
    v = free[rng.integers(len(free))]
    before = compute_cost_field(g, w, t).cost
    w2 = w.copy()
    w2[v] += rng.uniform(0.1, 10)
    after = compute_cost_field(g, w2, t).cost
    assert np.all(after >= before)


def test_extract_path_examples():
    c = GridMap.empty(1, 5)
    f = compute_cost_field(c, base_weights(c), (0, 4))
    assert extract_path(c, f, (0, 0)).vertices == ((0, 0), (0, 1), (0, 2), (0, 3), (0, 4))
    assert extract_path(c, f, (0, 4)).vertices == ((0, 4),)
    g = GridMap.empty(3, 3)
    f = compute_cost_field(g, base_weights(g), (1, 2))
    assert extract_path(g, f, (1, 0)).vertices == ((1, 0), (1, 1), (1, 2))


def test_extract_path_tie_break_prefers_up():
    # both (0,0)->(0,1)->(1,1) and (0,0)->(1,0)->(1,1) are shortest from... use start (1,0) to (0,1)
    g = GridMap.empty(2, 2)
    f = compute_cost_field(g, base_weights(g), (0, 1))
    assert extract_path(g, f, (1, 0)).vertices == ((1, 0), (0, 0), (0, 1))


def test_extract_path_unreachable():
    g = GridMap.from_rows([".@."])
    f = compute_cost_field(g, base_weights(g), (0, 2))
    with pytest.raises(Unreachable):
        extract_path(g, f, (0, 0))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_path_cost_equals_field_value(seed):
    rng = np.random.default_rng(seed)
    g = GridMap(9, 7, rng.random((7, 9)) < 0.25)
    free = g.free_cells()
    if len(free) < 2:
        return
    w = base_weights(g)
    w[~g.blocked] = rng.uniform(0.5, 4.0, size=int((~g.blocked).sum()))
    t = free[rng.integers(len(free))]
    f = compute_cost_field(g, w, t)
    for s in free[:10]:
        if not np.isfinite(f[s]):
            continue
        p = extract_path(g, f, s)
        assert p.start == s and p.end == t
        for a, b in zip(p.vertices, p.vertices[1:]):
            assert abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
        assert p.cost(w) == pytest.approx(f[s], abs=1e-9)


def test_path_plan_holds_last_vertex():
    p = PathPlan(((0, 0), (0, 1)))
    assert p.at(0) == (0, 0) and p.at(1) == (0, 1) and p.at(50) == (0, 1)


def test_local_channel_corridor():
    c = GridMap.empty(1, 5)
    f = compute_cost_field(c, base_weights(c), (0, 4))
    ch = local_channel(f, (0, 2), 3)
    assert ch[1].tolist() == [1.0, 0.0, -1.0]
    assert np.all(np.isinf(ch[0])) and np.all(np.isinf(ch[2]))


def test_local_channel_obstacle_and_center():
    g = GridMap.from_rows(["...", ".@.", "..."])
    f = compute_cost_field(g, base_weights(g), (2, 2))
    ch = local_channel(f, (1, 0), 3)
    assert ch[1, 1] == 0.0
    assert np.isinf(ch[1, 2])  # the obstacle at (1,1)
    assert np.all(np.isinf(ch[:, 0]))  # off-map column


def test_local_channel_errors():
    g = GridMap.from_rows([".@."])
    f = compute_cost_field(g, base_weights(g), (0, 2))
    with pytest.raises(CenterUnreachable):
        local_channel(f, (0, 0), 3)
    with pytest.raises(ValueError):
        local_channel(f, (0, 2), 4)
