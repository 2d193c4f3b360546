import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from sospath import (build_relaxation, from_distribution, lp_objective, make_rng,
                     recognize_series_parallel, solve)
from sospath.graph import Graph, lp_pow
from sospath.instances import (LatticeInstance, default_bits, gen_congestion_reduction,
                               gen_cvp_reduction, gen_dijkstra_counterexample, gen_random_sp,
                               gen_tightness_scalar, gen_tightness_tensor)
from sospath.oracles import (brute_force_congestion, brute_force_cvp, brute_force_opt,
                             enumerate_st_paths, exact_rounding_law, law_expectation)


def _bare(g):
    return Graph.from_edges(g.n, [(e.tail, e.head, e.cost) for e in g.edges], g.s, g.t)


# -- tightness ---------------------------------------------------------------------------


def test_scalar_h1_n2():
    fam = gen_tightness_scalar(1, 2)
    assert (fam.graph.n, fam.graph.m) == (3, 4)
    assert len(enumerate_st_paths(fam.graph)) == 4
    assert len(fam.paths) == 2


@pytest.mark.parametrize("h,N", [(1, 2), (1, 5), (2, 2), (2, 3), (3, 2)])
def test_scalar_family_objective_one(h, N):
    fam = gen_tightness_scalar(h, N)
    pe = from_distribution(fam.graph, fam.paths, fam.weights, degree=4)
    assert pe.evaluate(lp_objective(fam.graph, 2)) == 1
    assert all(fam.graph.path(p).cost == (1,) for p in fam.paths)
    tree = recognize_series_parallel(_bare(fam.graph))
    assert tree.order == fam.graph.sp_tree.order == h


def _q_law(h, N):
    """Law of the cost of the scalar order-h construction under rounding (recursion)."""
    if h == 0:
        return {1: Fraction(1)}
    inner = _q_law(h - 1, N)
    # one block: the cost-carrying branch has probability 1/N
    block = {0: Fraction(N - 1, N)}
    for c, q in inner.items():
        block[c] = block.get(c, 0) + q / N
    total = {0: Fraction(1)}
    for _ in range(N):
        nxt = {}
        for a, qa in total.items():
            for b, qb in block.items():
                nxt[a + b] = nxt.get(a + b, 0) + qa * qb
        total = nxt
    return total


@pytest.mark.parametrize("h,N", [(1, 3), (2, 2), (2, 3)])
def test_scalar_rounding_law_recursion(h, N):
    fam = gen_tightness_scalar(h, N)
    pe = from_distribution(fam.graph, fam.paths, fam.weights, degree=4)
    law = exact_rounding_law(fam.graph, pe)
    got = {}
    for path, q in law.items():
        c = fam.graph.path(path).cost[0]
        got[c] = got.get(c, 0) + q
    want = {c: q for c, q in _q_law(h, N).items() if q}
    assert got == want


def test_scalar_ratio_n50():
    # cost is Binomial(50, 1/50), so E[X^2] = 1 + 49/50
    assert sum(c * c * q for c, q in _q_law(1, 50).items()) == Fraction(99, 50)
    fam = gen_tightness_scalar(1, 6)
    pe = from_distribution(fam.graph, fam.paths, fam.weights, degree=4)
    law = exact_rounding_law(fam.graph, pe)
    assert law_expectation(fam.graph, law, 2) == Fraction(11, 6)


def test_tensor_paths():
    fam = gen_tightness_tensor(1, 3)
    g = fam.graph
    assert g.dim == 3 and len(fam.paths) == 3
    blocks = g.sp_tree.children
    for i, path in enumerate(fam.paths):
        assert g.path(path).cost == (1, 1, 1)
        for j, blk in enumerate(blocks):
            (e,) = set(path) & set(blk.edges)
            k = g.edges[e].cost.index(1)
            assert k == (i + j) % 3


def test_tensor_h2():
    fam = gen_tightness_tensor(2, 2)
    assert fam.graph.dim == 4
    assert len(fam.paths) == 4
    assert all(fam.graph.path(p).cost == (1, 1, 1, 1) for p in fam.paths)


@pytest.mark.parametrize("h,N", [(1, 2), (1, 3), (2, 2)])
def test_tensor_family_objective(h, N):
    fam = gen_tightness_tensor(h, N)
    pe = from_distribution(fam.graph, fam.paths, fam.weights, degree=4)
    assert pe.evaluate(lp_objective(fam.graph, 2)) == N ** h


def test_tensor_cap():
    with pytest.raises(ValueError):
        gen_tightness_tensor(3, 9)
    with pytest.raises(ValueError):
        gen_tightness_tensor(2, 3, cap=8)


def test_tensor_sos_value():
    fam = gen_tightness_tensor(1, 3)
    assert solve(build_relaxation(fam.graph, 2)).objective == pytest.approx(3, abs=1e-3)


# -- closest vector problem -----------------------------------------------------------------


def test_lattice_validation():
    with pytest.raises(ValueError):
        LatticeInstance(((1, 2), (2, 4)), (0, 0))
    with pytest.raises(ValueError):
        LatticeInstance(((1,),), (0, 0))
    inst = LatticeInstance(((1, 0), (0, 1)), (1, 1))
    assert inst.T == default_bits(2, 2, 1)
    assert inst.W == 2 * inst.T


def test_default_bits_formula():
    n, d, M = 3, 2, 5
    want = math.ceil(1 + math.log2(n) + d * math.log2(n * d) + (2 * d + 1) * math.log2(M))
    assert default_bits(n, d, M) == want


def test_cvp_identity_target():
    gad = gen_cvp_reduction(LatticeInstance(((1, 0), (0, 1)), (1, 1)))
    assert gad.graph.signed
    x, val = brute_force_cvp(gad.instance.B, gad.instance.u, 2)
    assert x == (1, 1) and val == 0
    path = gad.vector_to_path(x)
    assert path.is_st_path() and path.cost == (0, 0)


def test_cvp_one_dimensional():
    gad = gen_cvp_reduction(LatticeInstance(((2,),), (1,)))
    best = None
    rng = make_rng(0)
    for _ in range(300):
        path = _random_gadget_path(gad, rng, max_bits=2)
        v = lp_pow(path.cost, 2)
        best = v if best is None else min(best, v)
    assert best == 1
    assert brute_force_cvp(((2,),), (1,), 2)[1] == 1


def _random_gadget_path(gad, rng, max_bits=None):
    g = gad.graph
    edges = [0]
    for stage in range(gad.instance.W):
        cands = list(g.out_edges[stage + 1])
        if max_bits is not None:
            cands = [e for e in cands if not gad.labels[e][0] or gad.labels[e][1] < max_bits]
        edges.append(cands[int(rng.integers(len(cands)))])
    return g.path(edges)


def _random_lattice(rng):
    while True:
        n, d = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        if d > n:
            continue
        B = [[int(x) for x in rng.integers(-5, 6, d)] for _ in range(n)]
        u = [int(x) for x in rng.integers(-5, 6, n)]
        try:
            return LatticeInstance(B, u)
        except ValueError:
            continue


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cvp_roundtrip(seed):
    rng = make_rng(seed)
    inst = _random_lattice(rng)
    gad = gen_cvp_reduction(inst)
    for _ in range(5):
        path = _random_gadget_path(gad, rng)
        x = gad.path_to_vector(path.edges)
        assert all(isinstance(v, int) for v in x)
        assert path.cost == inst.residual(x)
        for p in (1, 2, 3):
            assert lp_pow(path.cost, p) == lp_pow(inst.residual(x), p)
    x, val = brute_force_cvp(inst.B, inst.u, 2)
    back = gad.vector_to_path(x)
    assert gad.path_to_vector(back.edges) == tuple(x)
    assert lp_pow(back.cost, 2) == val


def test_signed_graph_rejected_downstream():
    gad = gen_cvp_reduction(LatticeInstance(((2,),), (1,)))
    with pytest.raises(ValueError):
        build_relaxation(gad.graph, 2)


# -- congestion --------------------------------------------------------------------------------


def _linf_opt(gad):
    best = None
    for path in enumerate_st_paths(gad.graph):
        v = max(gad.graph.path(path).cost)
        best = v if best is None else min(best, v)
    return best


def test_congestion_single_pair():
    gad = gen_congestion_reduction(3, [(0, 1), (1, 2), (0, 2)], [(0, 2)])
    assert _linf_opt(gad) == 1


def test_congestion_shared_edge():
    gad = gen_congestion_reduction(4, [(0, 1), (1, 2), (2, 3)], [(0, 3), (1, 3)])
    assert _linf_opt(gad) == 2 == brute_force_congestion(4, gad.arcs, gad.pairs)


def test_congestion_disjoint_routes():
    arcs = [(0, 1), (1, 3), (0, 2), (2, 3)]
    gad = gen_congestion_reduction(4, arcs, [(0, 3), (0, 3)])
    assert _linf_opt(gad) == 1 == brute_force_congestion(4, arcs, [(0, 3), (0, 3)])


def test_congestion_routing_decodes():
    arcs = [(0, 1), (1, 2), (0, 2)]
    gad = gen_congestion_reduction(3, arcs, [(0, 2), (0, 1)])
    for path in enumerate_st_paths(gad.graph):
        routes = gad.routing(path)
        for (s, t), r in zip(gad.pairs, routes):
            assert arcs[r[0]][0] == s and arcs[r[-1]][1] == t


def _random_congestion(rng):
    n = int(rng.integers(2, 7))
    arcs = sorted({(int(a), int(b)) for a, b in rng.integers(0, n, size=(int(rng.integers(1, 9)), 2))
                   if a != b})
    if not arcs:
        return None
    succ = {}
    for a, b in arcs:
        succ.setdefault(a, set()).add(b)
    pairs = []
    for _ in range(int(rng.integers(1, 4))):
        a, b = arcs[int(rng.integers(len(arcs)))]
        pairs.append((a, b))
    return n, arcs, pairs


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_congestion_matches_brute_force(seed):
    inst = _random_congestion(make_rng(seed))
    if inst is None:
        return
    n, arcs, pairs = inst
    gad = gen_congestion_reduction(n, arcs, pairs)
    assert _linf_opt(gad) == brute_force_congestion(n, arcs, pairs)


# -- Dijkstra counterexample -------------------------------------------------------------------


def test_dijkstra_n2_costs():
    g = gen_dijkstra_counterexample(2, Fraction(1, 10))
    costs = {(e.tail, e.head, e.cost) for e in g.edges}
    assert costs == {(0, 1, (1, 0, 0)), (1, 2, (0, 1, 0)),
                     (0, 1, (0, Fraction(9, 10), 0)), (0, 2, (0, 0, Fraction(9, 5)))}


def test_dijkstra_n16_ratio():
    from sospath.oracles import lp_dijkstra
    g = gen_dijkstra_counterexample(16)
    path, cost = lp_dijkstra(g, 2)
    assert path.edges == (g.m - 1,) and lp_pow(path.cost, 2) == Fraction(72, 5) ** 2
    _, opt = brute_force_opt(g, 2)
    assert cost / opt == pytest.approx(3.6)


# -- random series-parallel --------------------------------------------------------------------


def test_random_sp_order_zero_is_bundle():
    g = gen_random_sp(0, 3, 2, make_rng(1))
    assert g.n == 2 and all((e.tail, e.head) == (0, 1) for e in g.edges)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(2, 3), st.sampled_from(["int", "binary", "uniform"]),
       st.integers(0, 2**32 - 1))
def test_random_sp_valid(order, width, law, seed):
    g = gen_random_sp(order, width, 2, make_rng(seed), law)
    assert g.sp_tree.order == order
    tree = recognize_series_parallel(_bare(g))
    assert tree is not None and tree.order == order


def test_random_sp_law_rejected():
    with pytest.raises(ValueError):
        gen_random_sp(1, 2, 1, make_rng(0), law="gaussian")


def test_enumerated_pairs_are_disjoint_blocks():
    fam = gen_tightness_scalar(1, 4)
    for p1, p2 in itertools.combinations(fam.paths, 2):
        ones1 = {e for e in p1 if fam.graph.edges[e].cost == (1,)}
        ones2 = {e for e in p2 if fam.graph.edges[e].cost == (1,)}
        assert not ones1 & ones2
