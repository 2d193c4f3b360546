"""Exact baselines: brute-force optima, scalarized and Dijkstra-style heuristics,
and exact laws of the rounding algorithms."""

from __future__ import annotations

import heapq
import itertools
import math
from fractions import Fraction
from math import comb

import numpy as np

from .graph import Graph, LayeredGraph, Path, lp_norm, lp_pow
from .rounding import _cond_moment, layer_probabilities, pivots

__all__ = [
    "InstanceTooLarge", "count_st_paths", "enumerate_st_paths", "brute_force_opt",
    "brute_force_group_tour",
    "l1_baseline", "lp_dijkstra", "exact_rounding_law", "exact_layered_law",
    "exact_sampling_law", "exact_cost_moments", "law_edge_marginals",
    "law_expectation", "brute_force_cvp", "brute_force_congestion",
]

PATH_LIMIT = 200_000


class InstanceTooLarge(ValueError):
    pass


# -- path enumeration ----------------------------------------------------------


def count_st_paths(g: Graph) -> int:
    """Number of s-t paths of a DAG (suffix-count DP)."""
    order = g.topological_order
    if order is None:
        raise ValueError("path counting needs a DAG")
    cnt = [0] * g.n
    cnt[g.t] = 1
    for u in reversed(order):
        if u != g.t:
            cnt[u] = sum(cnt[g.edges[e].head] for e in g.out_edges[u])
    return cnt[g.s]


def enumerate_st_paths(g: Graph, limit: int = PATH_LIMIT) -> list:
    """All s-t paths as edge-id tuples, in lexicographic order of edge ids.

    DAGs: every s-t path.  Otherwise: simple paths only.
    """
    if g.s == g.t:
        raise ValueError("path enumeration needs s != t")
    if g.is_dag and count_st_paths(g) > limit:
        raise InstanceTooLarge(f"more than {limit} s-t paths")
    out = []
    reach = g.reach

    def rec(u, acc, seen):
        if u == g.t:
            out.append(tuple(acc))
            if len(out) > limit:
                raise InstanceTooLarge(f"more than {limit} s-t paths")
            return
        for e in sorted(g.out_edges[u]):
            v = g.edges[e].head
            if v in seen or g.t not in reach[v]:
                continue
            acc.append(e)
            seen.add(v)
            rec(v, acc, seen)
            seen.discard(v)
            acc.pop()

    rec(g.s, [], {g.s})
    return out


def brute_force_group_tour(g: Graph, groups, p, max_len: int | None = None):
    """Cheapest closed walk visiting every group, over walks of <= max_len edges.

    Returns ``(edge tuple, l_p cost)``; the empty walk counts when one vertex
    hits every group.  ``max_len`` defaults to n*k - 1.
    """
    groups = [frozenset(x) for x in groups]
    k = len(groups)
    max_len = g.n * k - 1 if max_len is None else max_len
    best, best_pow = None, None
    zero = (0,) * g.dim
    for s in sorted(groups[-1]) if groups else range(g.n):
        stack = [(s, (), zero, frozenset(i for i in range(k) if s in groups[i]))]
        while stack:
            u, walk, cost, hit = stack.pop()
            if u == s and len(hit) == k:
                c = lp_pow(cost, p)
                if _better(c, walk, best_pow, best):
                    best, best_pow = walk, c
            if len(walk) == max_len:
                continue
            if best_pow is not None and lp_pow(cost, p) > best_pow:
                continue
            for e in g.out_edges[u]:
                v = g.edges[e].head
                nc = tuple(a + b for a, b in zip(cost, g.edges[e].cost))
                nh = hit | {i for i in range(k) if v in groups[i]}
                stack.append((v, walk + (e,), nc, nh))
    if best is None:
        raise ValueError("no covering closed walk within the length bound")
    vec = zero
    for e in best:
        vec = tuple(a + b for a, b in zip(vec, g.edges[e].cost))
    return best, lp_norm(vec, p)


def _better(cost, key, best_cost, best_key) -> bool:
    return best_cost is None or cost < best_cost or (cost == best_cost and key < best_key)


def brute_force_opt(g: Graph, p, limit: int = PATH_LIMIT):
    """Minimum l_p-cost s-t path (ties: lexicographically smallest edge ids).

    Returns ``(Path, cost)``; costs are compared through exact p-th powers.
    """
    best, best_pow = None, None
    for edges in enumerate_st_paths(g, limit):
        path = Path(g, edges)
        c = lp_pow(path.cost, p)
        if _better(c, edges, best_pow, best.edges if best else None):
            best, best_pow = path, c
    if best is None:
        raise ValueError("no s-t path")
    return best, lp_norm(best.cost, p)


def l1_baseline(g: Graph, p):
    """Shortest path under scalar costs ||c_e||_1; returns ``(Path, l_p cost)``."""
    w = [sum(abs(c) for c in e.cost) for e in g.edges]
    dist = {g.s: 0}
    pred = {}
    done = set()
    heap = [(0, g.s)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == g.t:
            break
        for e in sorted(g.out_edges[u]):
            v = g.edges[e].head
            nd = d + w[e]
            if v not in dist or nd < dist[v] or (nd == dist[v] and v not in done and e < pred[v]):
                dist[v] = nd
                pred[v] = e
                heapq.heappush(heap, (nd, v))
    if g.t not in done:
        raise ValueError("t unreachable")
    edges = []
    v = g.t
    while v != g.s:
        e = pred[v]
        edges.append(e)
        v = g.edges[e].tail
    path = Path(g, tuple(reversed(edges)))
    return path, lp_norm(path.cost, p)


def lp_dijkstra(g: Graph, p):
    """The label-setting l_p heuristic, transcribed as stated.

    DISTANCE is compared through exact p-th powers.  Labels of already removed
    vertices may still be overwritten, as in the original; the loop stops once
    only unreachable vertices remain.  Returns ``(Path, l_p cost)``.
    """
    if g.signed:
        raise ValueError("non-negative costs required")
    INF = None
    dist = [INF] * g.n
    path = [()] * g.n
    vec = [None] * g.n
    dist[g.s] = 0
    vec[g.s] = (0,) * g.dim
    queue = set(range(g.n))
    while queue:
        v = min(queue, key=lambda u: (dist[u] is INF, dist[u] if dist[u] is not INF else 0, u))
        if dist[v] is INF:
            break
        for e in sorted(g.out_edges[v]):
            u = g.edges[e].head
            cand_vec = tuple(a + b for a, b in zip(vec[v], g.edges[e].cost))
            cand = lp_pow(cand_vec, p)
            if dist[u] is INF or dist[u] > cand:
                path[u] = path[v] + (e,)
                vec[u] = cand_vec
                dist[u] = cand
        queue.discard(v)
    if dist[g.t] is INF:
        raise ValueError("t unreachable")
    out = Path(g, path[g.t])
    return out, lp_norm(out.cost, p)


# -- exact rounding laws -------------------------------------------------------


def exact_rounding_law(g: Graph, pe, limit: int = PATH_LIMIT) -> dict:
    """Exact output law of the series-parallel rounding: path edges -> probability."""
    x = [pe.value((e,)) for e in range(g.m)]
    law = {}

    def rec(u, acc, prob):
        if u == g.t:
            law[tuple(acc)] = law.get(tuple(acc), 0) + prob
            if len(law) > limit:
                raise InstanceTooLarge(f"more than {limit} outcomes")
            return
        out = g.out_edges[u]
        pu = sum(x[e] for e in out)
        for e in out:
            if x[e] > 0:
                acc.append(e)
                rec(g.edges[e].head, acc, prob * x[e] / pu)
                acc.pop()

    rec(g.s, [], Fraction(1) if all(isinstance(v, (int, Fraction)) for v in x) else 1.0)
    return law


def _cond_value(pe, cond: tuple, e: int):
    return pe.value(tuple(sorted(set(cond) | {e})))


def exact_sampling_law(lg: LayeredGraph, pe, layers, A=(), mode: str = "product") -> dict:
    """Exact law of the edge-sampling procedure: frozenset of edges -> probability.

    Uses the sampler's own probability rule, so the two agree draw for draw.
    """
    law = {}
    A = tuple(sorted(A))

    def rec(i, R, prob):
        if i == len(layers):
            key = frozenset(R)
            law[key] = law.get(key, 0) + prob
            return
        cond = tuple(sorted(set(A) | set(R)))
        cands = lg.layers[layers[i]]
        den = _cond_moment(pe, cond, mode=mode)
        probs = layer_probabilities([_cond_moment(pe, cond, e, mode) for e in cands], den,
                                    f"layer {layers[i]}", mode)
        for e, q in zip(cands, probs):
            if q > 0:
                rec(i + 1, R + (e,), prob * q)

    rec(0, (), 1)
    return law


def exact_layered_law(lg: LayeredGraph, pe, a: int, limit: int = PATH_LIMIT) -> dict:
    """Exact output law of the recursive layered rounding: path edges -> probability."""
    def find(y, z, A):
        # list of (edges dict layer->edge, prob)
        if z - y + 1 <= a:
            law = exact_sampling_law(lg, pe, list(range(y, z + 1)), A)
            return [({lg.edge_layer[e]: e for e in R}, q) for R, q in law.items()]
        ms = pivots(y, z, a)
        out = []
        for R, q in exact_sampling_law(lg, pe, ms, A).items():
            A2 = tuple(sorted(set(A) | R))
            bounds = [y - 1] + ms + [z + 1]
            parts = [[({lg.edge_layer[e]: e for e in R}, q)]]
            for i in range(len(bounds) - 1):
                lo, hi = bounds[i] + 1, bounds[i + 1] - 1
                if lo <= hi:
                    parts.append(find(lo, hi, A2))
            for combo in itertools.product(*parts):
                d, prob = {}, 1
                for sub, sq in combo:
                    d.update(sub)
                    prob = prob * sq
                out.append((d, prob))
            if len(out) > limit:
                raise InstanceTooLarge(f"more than {limit} outcomes")
        return out

    law = {}
    for d, q in find(1, lg.delta, ()):
        key = tuple(d[i] for i in range(1, lg.delta + 1))
        law[key] = law.get(key, 0) + q
    return law


def law_edge_marginals(law: dict, m: int) -> list:
    marg = [0] * m
    for path, q in law.items():
        for e in set(path):
            marg[e] += q
    return marg


def law_expectation(g: Graph, law: dict, p) -> object:
    """E[cost(P)^p] under an explicit law."""
    return sum(q * lp_pow(Path(g, path).cost, p) for path, q in law.items())


def exact_cost_moments(g: Graph, pe, p: int, coords=None):
    """E[||cost(P)||_p^p] of the series-parallel rounding, without enumerating paths.

    Forward DP over the DAG: F_u[r] = E[C^r ; P reaches u] per cost coordinate,
    where C is the cost accumulated so far.  Exact for rational moments.
    """
    order = g.topological_order
    if order is None:
        raise ValueError("needs a DAG")
    x = [pe.value((e,)) for e in range(g.m)]
    exact = all(isinstance(v, (int, Fraction)) for v in x)
    zero, one = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    pu = [sum(x[e] for e in g.out_edges[u]) for u in range(g.n)]
    coords = range(g.dim) if coords is None else coords
    total = zero
    for i in coords:
        F = [[zero] * (p + 1) for _ in range(g.n)]
        F[g.s][0] = one
        for u in order:
            if u == g.t or not F[u][0] or not pu[u] > 0:
                continue
            for e in g.out_edges[u]:
                if not x[e] > 0:
                    continue
                q = x[e] / pu[u]
                c = g.edges[e].cost[i]
                v = g.edges[e].head
                for r in range(p + 1):
                    acc = zero
                    for k in range(r + 1):
                        if F[u][k]:
                            acc += comb(r, k) * (c ** (r - k) if r - k else 1) * F[u][k]
                    F[v][r] += q * acc
        total += F[g.t][p]
    return total


# -- problem-specific brute force ------------------------------------------------


def brute_force_cvp(B, u, p, radius: int | None = None):
    """argmin_x ||B x - u||_p over integer x (lexicographic ties).

    The default search box comes from Hoelder's inequality applied to the
    pseudo-inverse rows: |x_k| <= ||pinv_k||_q ||B x*||_p, and ||B x*||_p is at
    most ||u||_p plus the residual of the rounded real solution.  Returns
    ``(x, cost_pow)`` with the exact p-th power.
    """

    B = [list(map(int, row)) for row in B]
    d = len(B[0])
    if radius is None:
        pinv = np.linalg.pinv(np.array(B, dtype=float))
        x0 = [int(v) for v in np.rint(pinv @ np.array(u, dtype=float))]
        reach = lp_norm(u, p) + lp_norm(_residual(B, u, x0), p)
        q = 1.0 if p == math.inf else (math.inf if p == 1 else p / (p - 1))
        norms = np.linalg.norm(pinv, ord=q, axis=1)
        radii = [int(math.floor(r * reach * (1 + 1e-9) + 1e-9)) for r in norms]
    else:
        radii = [radius] * d
    if not (p == math.inf or (isinstance(p, int) and p >= 1)):
        best, best_val = None, None
        for x in itertools.product(*(range(-r, r + 1) for r in radii)):
            val = lp_pow(_residual(B, u, x), p)
            if best_val is None or val < best_val:
                best, best_val = x, val
        return best, best_val
    # vectorized over the box, one slab per value of x_0; C order keeps ties lexicographic
    Bm, um = np.array(B, dtype=np.int64), np.array(u, dtype=np.int64)
    sides = [2 * r + 1 for r in radii[1:]]
    rest = np.indices(sides, dtype=np.int64).reshape(d - 1, math.prod(sides)).T
    rest = rest - np.array(radii[1:], dtype=np.int64)
    best, best_key = None, None
    for first in range(-radii[0], radii[0] + 1):
        xs = np.hstack([np.full((len(rest), 1), first, dtype=np.int64), rest])
        r = np.abs(xs @ Bm.T - um)
        vals = r.max(axis=1) if p == math.inf else (r ** p).sum(axis=1)
        i = int(np.argmin(vals))
        if best_key is None or vals[i] < best_key:
            best, best_key = tuple(int(v) for v in xs[i]), vals[i]
    return best, lp_pow(_residual(B, u, best), p)


def _residual(B, u, x):
    return [sum(B[i][k] * x[k] for k in range(len(x))) - u[i] for i in range(len(B))]


def _simple_paths(succ, s, t, limit=PATH_LIMIT):
    out = []

    def rec(u, acc, seen):
        if u == t:
            out.append(tuple(acc))
            if len(out) > limit:
                raise InstanceTooLarge("too many paths")
            return
        for eid, v in succ[u]:
            if v not in seen:
                seen.add(v)
                acc.append(eid)
                rec(v, acc, seen)
                acc.pop()
                seen.discard(v)

    rec(s, [], {s})
    return out


def brute_force_congestion(n: int, arcs, pairs) -> int:
    """Minimum congestion of a routing of ``pairs`` along simple paths."""
    succ = [[] for _ in range(n)]
    for i, (a, b) in enumerate(arcs):
        succ[a].append((i, b))
    options = [_simple_paths(succ, s, t) for s, t in pairs]
    if any(not o for o in options):
        raise ValueError("some pair cannot be routed")
    best = None
    for combo in itertools.product(*options):
        load = [0] * len(arcs)
        for path in combo:
            for e in path:
                load[e] += 1
        c = max(load) if load else 0
        if best is None or c < best:
            best = c
    return best
