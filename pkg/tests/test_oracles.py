import heapq
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sospath import Graph, build_relaxation, from_distribution, make_rng, solve
from sospath.graph import lp_pow
from sospath.instances import (gen_dijkstra_counterexample, gen_random_sp,
                               gen_tightness_scalar, gen_tightness_tensor)
from sospath.oracles import (InstanceTooLarge, brute_force_cvp, brute_force_group_tour,
                             brute_force_opt, count_st_paths, enumerate_st_paths,
                             exact_rounding_law, l1_baseline, law_edge_marginals,
                             law_expectation, lp_dijkstra)
from sospath.rounding import round_series_parallel


def _random_dag(rng, n, dim, hi=4):
    edges = [(u, v, tuple(int(x) for x in rng.integers(0, hi, dim)))
             for u in range(n) for v in range(u + 1, n) if rng.random() < 0.6]
    edges.append((0, n - 1, tuple(int(x) for x in rng.integers(0, 2 * hi, dim))))
    return Graph.from_edges(n, edges, 0, n - 1)


def test_single_path_oracles(chain3):
    path, cost = brute_force_opt(chain3, 2)
    assert path.edges == (0, 1, 2) and cost == 6
    assert l1_baseline(chain3, 2)[0].edges == (0, 1, 2)
    assert lp_dijkstra(chain3, 2)[0].edges == (0, 1, 2)


def test_count_and_enumerate(g1_2):
    assert count_st_paths(g1_2) == 4
    paths = enumerate_st_paths(g1_2)
    assert paths == sorted(paths) and len(paths) == 4
    with pytest.raises(InstanceTooLarge):
        enumerate_st_paths(gen_tightness_scalar(1, 30).graph, limit=1000)


def test_dijkstra_counterexample_opt():
    g = gen_dijkstra_counterexample(16)
    path, cost = brute_force_opt(g, 2)
    assert path.edges == tuple(range(16))
    assert cost == pytest.approx(16 ** 0.5)
    assert lp_pow(path.cost, 2) == 16


def test_tensor_opt():
    fam = gen_tightness_tensor(1, 3)
    assert count_st_paths(fam.graph) == 27
    _, cost = brute_force_opt(fam.graph, 2)
    assert cost == pytest.approx(math.sqrt(3))


def test_l1_baseline_diamond_tie():
    g = Graph.from_edges(4, [(0, 1, (1, 0, 0)), (1, 3, (0, 1, 0)), (0, 2, (0, 0, 1)),
                             (2, 3, (0, 0, 1))], 0, 3)
    path, _ = l1_baseline(g, 2)
    assert sum(path.cost) == 2
    costs = sorted(g.path(p).lp_cost(2) for p in enumerate_st_paths(g))
    assert costs == pytest.approx([math.sqrt(2), 2])


def _classical_shortest(g):
    dist = {g.s: 0}
    heap = [(0, g.s)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        for e in g.out_edges[u]:
            v = g.edges[e].head
            nd = d + g.edges[e].cost[0]
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist[g.t]


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**32 - 1))
def test_scalar_instances_agree(n, seed):
    g = _random_dag(make_rng(seed), n, 1)
    want = _classical_shortest(g)
    _, opt = brute_force_opt(g, 2)
    assert opt == pytest.approx(want)
    assert sum(l1_baseline(g, 2)[0].cost) == want
    assert lp_dijkstra(g, 3)[1] == pytest.approx(want)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), st.integers(1, 4), st.sampled_from([2, 3]), st.integers(0, 2**32 - 1))
def test_l1_baseline_ratio(n, dim, p, seed):
    g = _random_dag(make_rng(seed), n, dim)
    _, opt = brute_force_opt(g, p)
    base = l1_baseline(g, p)[0].lp_cost(p)
    if opt == 0:
        assert base == 0
    else:
        assert base <= dim ** (1 - 1 / p) * opt * (1 + 1e-12)


@pytest.mark.parametrize("n", [8, 16, 32])
def test_dijkstra_ratio_scaling(n):
    eps = Fraction(1, 10)
    g = gen_dijkstra_counterexample(n, eps)
    path, _ = lp_dijkstra(g, 2)
    assert lp_pow(path.cost, 2) == ((1 - eps) * n) ** 2
    opt_path, _ = brute_force_opt(g, 2)
    assert lp_pow(opt_path.cost, 2) == n
    # ratio^2 = (1 - eps)^2 n exactly
    assert lp_pow(path.cost, 2) / lp_pow(opt_path.cost, 2) == (1 - eps) ** 2 * n


def test_rounding_law_examples():
    g = Graph.from_edges(3, [(0, 1, 1), (1, 2, 1)], 0, 2)
    pe = from_distribution(g, [(0, 1)], [1])
    assert exact_rounding_law(g, pe) == {(0, 1): 1}
    fam = gen_tightness_scalar(1, 2)
    pe = from_distribution(fam.graph, fam.paths, fam.weights, degree=4)
    law = exact_rounding_law(fam.graph, pe)
    assert sorted(law.values()) == [Fraction(1, 4)] * 4


def test_rounding_law_vs_monte_carlo():
    fam = gen_tightness_scalar(2, 2)
    g = fam.graph
    pe = from_distribution(g, fam.paths, fam.weights, degree=4)
    exact = float(law_expectation(g, exact_rounding_law(g, pe), 2))
    rng = make_rng(2)
    vals = [lp_pow(round_series_parallel(g, pe, rng).cost, 2) for _ in range(20000)]
    mean = sum(vals) / len(vals)
    sd = math.sqrt(sum((v - mean) ** 2 for v in vals) / (len(vals) - 1))
    assert abs(mean - exact) <= 3 * sd / math.sqrt(len(vals))


def _sp_corpus(seed, count, max_edges=10):
    rng = make_rng(seed)
    out = []
    while len(out) < count:
        g = gen_random_sp(len(out) % 3, 2, 2, rng)
        if g.m <= max_edges:
            out.append(g)
    return out


@pytest.mark.parametrize("g", _sp_corpus(8, 8), ids=lambda g: f"m{g.m}")
def test_law_marginals_and_soundness(g):
    res = solve(build_relaxation(g, 2))
    marg = law_edge_marginals(exact_rounding_law(g, res.pe), g.m)
    assert max(abs(marg[e] - res.pe.value((e,))) for e in range(g.m)) <= 1e-12
    path, _ = brute_force_opt(g, 2)
    assert lp_pow(path.cost, 2) >= res.objective - 1e-6


def test_brute_force_cvp_small():
    assert brute_force_cvp(((2,),), (1,), 2) == ((0,), 1)
    x, val = brute_force_cvp(((1, 0), (0, 1)), (1, 1), 2)
    assert x == (1, 1) and val == 0


def test_group_tour_brute_force():
    g = Graph.from_edges(4, [(i, (i + 1) % 4, 1) for i in range(4)], 0, 0, tour=True)
    edges, cost = brute_force_group_tour(g, [(2,), (0,)], 2)
    assert sorted(edges) == [0, 1, 2, 3] and cost == pytest.approx(4)
    edges, cost = brute_force_group_tour(g, [(0,)], 2)
    assert edges == () and cost == 0


def test_enumeration_exhaustive_against_itertools():
    rng = make_rng(5)
    for _ in range(10):
        g = _random_dag(rng, 5, 1)
        listed = set(enumerate_st_paths(g))
        found = set()
        for r in range(1, g.n):
            for combo in itertools.permutations(range(g.m), r):
                try:
                    p = g.path(combo)
                except ValueError:
                    continue
                if p.is_st_path():
                    found.add(combo)
        assert listed == found


@pytest.mark.parametrize("p", [1, 2, 3, math.inf])
def test_cvp_box_is_sufficient(p):
    rng = make_rng(17)
    for _ in range(15):
        d = int(rng.integers(1, 3))
        B = [[int(v) for v in rng.integers(-3, 4, d)] for _ in range(d + 1)]
        u = [int(v) for v in rng.integers(-4, 5, d + 1)]
        if np.linalg.matrix_rank(np.array(B)) < d:
            continue
        assert brute_force_cvp(B, u, p) == brute_force_cvp(B, u, p, radius=25)
