import itertools

import numpy as np
from hypothesis import given, settings, strategies as st

from steam_mapf.cover import is_cover, select_cover, solve_cover

from conftest import brute_min_cover


def test_examples():
    assert select_cover([(1, 2), (2, 3)]) == (2,)
    assert select_cover([(1, 2)]) == (1,)
    assert select_cover([]) == ()


def test_triangle_lex_smallest():
    # three minimum covers of size 2; {0,1} is lexicographically first
    assert select_cover([(0, 1), (1, 2), (0, 2)]) == (0, 1)


def test_duplicate_pairs_are_one_edge():
    assert select_cover([(3, 5), (3, 5), (5, 3)]) == (3,)


edges = st.lists(
    st.tuples(st.integers(0, 11), st.integers(0, 11)).filter(lambda e: e[0] != e[1]).map(lambda e: tuple(sorted(e))),
    max_size=30,
)


@settings(max_examples=300, deadline=None)
@given(edges)
def test_matches_brute_force(pairs):
    got = select_cover(pairs)
    assert got == brute_min_cover(pairs)
    assert is_cover(got, pairs)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(25, 60))
def test_large_graphs_are_covered_and_flagged(seed, n):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(n, 3 * n))
    pairs = set()
    while len(pairs) < m:
        a, b = rng.integers(0, n, size=2)
        if a != b:
            pairs.add((int(min(a, b)), int(max(a, b))))
    res = solve_cover(sorted(pairs))
    assert is_cover(res.agents, pairs)
    involved = {x for p in pairs for x in p}
    if len(involved) > 24:
        assert not res.exact
    # a maximal matching lower-bounds the optimum, and the approximation is within 2x of it
    matched, size = set(), 0
    for a, b in sorted(pairs):
        if a not in matched and b not in matched:
            matched |= {a, b}
            size += 1
    assert len(res.agents) <= 2 * size


def test_exact_on_star_beyond_limit():
    # a star with 30 leaves: both approximations still find the centre
    pairs = [(0, k) for k in range(1, 31)]
    assert solve_cover(pairs).agents == (0,)


def test_all_subsets_small_graph_exhaustive():
    nodes = range(5)
    all_edges = list(itertools.combinations(nodes, 2))
    for mask in range(1 << len(all_edges)):
        pairs = [e for k, e in enumerate(all_edges) if mask >> k & 1]
        assert select_cover(pairs) == brute_min_cover(pairs)
