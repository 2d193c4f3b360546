"""Instance generators: tightness gadgets, reductions and random corpora."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
import sympy

from .graph import Block, Graph, Path, build_series_parallel, leaf, parallel, series

__all__ = [
    "PathFamily", "gen_tightness_scalar", "gen_tightness_tensor", "LatticeInstance",
    "CVPGadget", "gen_cvp_reduction", "CongestionGadget", "gen_congestion_reduction",
    "gen_dijkstra_counterexample", "gen_random_sp", "order_edges",
]

TENSOR_DIM_CAP = 512


class PathFamily(NamedTuple):
    graph: Graph
    paths: list
    weights: list


def order_edges(g: Graph, edge_set) -> tuple:
    """Arrange an edge set that forms an s-t path in path order."""
    by_tail = {g.edges[e].tail: e for e in edge_set}
    if len(by_tail) != len(edge_set):
        raise ValueError("edge set branches")
    out, u = [], g.s
    while u in by_tail:
        e = by_tail.pop(u)
        out.append(e)
        u = g.edges[e].head
    if by_tail or u != g.t:
        raise ValueError("edge set is not an s-t path")
    return tuple(out)


def _uniform(g: Graph, sets) -> PathFamily:
    paths = [Path(g, order_edges(g, s)) for s in sets]
    w = Fraction(1, len(paths))
    return PathFamily(g, paths, [w] * len(paths))


# -- tightness ----------------------------------------------------------------


def _scalar_shape(h: int, N: int) -> Block:
    if h == 0:
        return leaf(1)
    inner = _scalar_shape(h - 1, N)
    return series(*[parallel(inner, leaf(0)) for _ in range(N)])


def _scalar_family(b: Block, h: int) -> list:
    """Edge sets using exactly one cost-1 edge, one per scalar gadget path."""
    if h == 0:
        return [frozenset(b.edges)]
    out = []
    blocks = b.children
    zero = [blk.children[1].edges[0] for blk in blocks]
    for j, blk in enumerate(blocks):
        rest = frozenset(z for i, z in enumerate(zero) if i != j)
        for sub in _scalar_family(blk.children[0], h - 1):
            out.append(rest | sub)
    return out


def gen_tightness_scalar(h: int, N: int) -> PathFamily:
    """G^(h)_N with 0/1 scalar costs and the uniform law over its N^h
    single-cost-1-edge paths (objective value 1 for every p)."""
    if h < 1 or N < 2:
        raise ValueError("need h >= 1 and N >= 2")
    g = build_series_parallel(_scalar_shape(h, N))
    return _uniform(g, _scalar_family(g.sp_tree, h))


def _unit(i: int, N: int) -> tuple:
    return tuple(1 if k == i else 0 for k in range(N))


def _kron(a: tuple, b: tuple) -> tuple:
    return tuple(x * y for x in a for y in b)


def _tensor_shape(h: int, N: int, prefix: tuple) -> Block:
    """G^(h) whose edge costs are prefix (x) (own cost)."""
    if h == 0:
        return leaf(prefix)
    return series(*[
        parallel(*[_tensor_shape(h - 1, N, _kron(prefix, _unit(i, N))) for i in range(N)])
        for _ in range(N)])


def _tensor_family(b: Block, h: int, N: int) -> list:
    """P_{i_1..i_h}: copy (i_1 + j) mod N in block j, then P_{i_2..i_h} inside."""
    if h == 0:
        return [frozenset(b.edges)]
    subs = [[_tensor_family(copy, h - 1, N) for copy in blk.children] for blk in b.children]
    out = []
    for i in range(N):
        for rest in range(N ** (h - 1)):
            acc = frozenset()
            for j in range(N):
                acc |= subs[j][(i + j) % N][rest]
            out.append(acc)
    return out


def gen_tightness_tensor(h: int, N: int, cap: int = TENSOR_DIM_CAP) -> PathFamily:
    """The tensor-cost gadget: l = N^h, every family path has all-ones cost."""
    if h < 1 or N < 2:
        raise ValueError("need h >= 1 and N >= 2")
    if N ** h > cap:
        raise ValueError(f"dimension N^h = {N ** h} exceeds the cap {cap}")
    g = build_series_parallel(_tensor_shape(h, N, (1,)))
    return _uniform(g, _tensor_family(g.sp_tree, h, N))


# -- closest vector problem --------------------------------------------------------


@dataclass(frozen=True)
class LatticeInstance:
    """Basis B (n x d integer, full column rank) and integer target u."""

    B: tuple
    u: tuple
    T: int | None = None
    W: int | None = None

    def __post_init__(self):
        B = tuple(tuple(int(x) for x in row) for row in self.B)
        u = tuple(int(x) for x in self.u)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "u", u)
        if not B or not B[0]:
            raise ValueError("empty basis")
        if len(u) != len(B) or any(len(r) != len(B[0]) for r in B):
            raise ValueError("shape mismatch")
        if sympy.Matrix(B).rank() != len(B[0]):
            raise ValueError("basis is rank deficient")
        if self.T is None:
            object.__setattr__(self, "T", default_bits(self.n, self.d, self.M))
        if self.W is None:
            object.__setattr__(self, "W", self.d * self.T)

    @property
    def n(self) -> int:
        return len(self.B)

    @property
    def d(self) -> int:
        return len(self.B[0])

    @property
    def M(self) -> int:
        return max(1, max(abs(x) for row in self.B for x in row), max(map(abs, self.u)))

    def column(self, k: int) -> tuple:
        return tuple(row[k] for row in self.B)

    def residual(self, x) -> tuple:
        return tuple(sum(r[k] * x[k] for k in range(self.d)) - ui
                     for r, ui in zip(self.B, self.u))


def default_bits(n: int, d: int, M: int) -> int:
    """ceil(1 + log2 n + d log2(nd) + (2d+1) log2 M)."""
    return math.ceil(1 + math.log2(n) + d * math.log2(n * d) + (2 * d + 1) * math.log2(M))


@dataclass(frozen=True)
class CVPGadget:
    graph: Graph
    instance: LatticeInstance
    labels: tuple  # per edge: None (first edge), (0, 0, 0) zero edge, or (g, j, k)
    lookup: dict   # (stage, g, j, k) -> edge id

    def path_to_vector(self, path) -> tuple:
        x = [0] * self.instance.d
        for e in path:
            lab = self.labels[e]
            if lab and lab[0]:
                sgn, j, k = lab
                x[k] += sgn * 2 ** j
        return tuple(x)

    def vector_to_path(self, x) -> Path:
        """The binary-expansion path of x (bits ordered by coordinate, then bit)."""
        inst = self.instance
        bits = []
        for k, v in enumerate(x):
            sgn = 1 if v >= 0 else -1
            a = abs(int(v))
            j = 0
            while a:
                if a & 1:
                    if j > inst.T:
                        raise ValueError(f"|x_{k}| needs bit {j} > T = {inst.T}")
                    bits.append((sgn, j, k))
                a >>= 1
                j += 1
        if len(bits) > inst.W:
            raise ValueError(f"x needs {len(bits)} stages, only {inst.W} available")
        bits += [(0, 0, 0)] * (inst.W - len(bits))
        edges = [0] + [self.lookup[(i, *lab)] for i, lab in enumerate(bits)]
        return Path(self.graph, tuple(edges))


def gen_cvp_reduction(inst: LatticeInstance) -> CVPGadget:
    """Signed-cost layered gadget: paths <-> integer vectors x, cost = B x - u."""
    n, d, T, W = inst.n, inst.d, inst.T, inst.W
    edges = [(0, 1, tuple(-c for c in inst.u))]
    labels = [None]
    lookup = {}
    zero = (0,) * n
    cols = [inst.column(k) for k in range(d)]
    for i in range(W):
        u, v = i + 1, i + 2
        lookup[(i, 0, 0, 0)] = len(edges)
        edges.append((u, v, zero))
        labels.append((0, 0, 0))
        for k in range(d):
            for j in range(T + 1):
                for sgn in (1, -1):
                    lookup[(i, sgn, j, k)] = len(edges)
                    edges.append((u, v, tuple(sgn * 2 ** j * c for c in cols[k])))
                    labels.append((sgn, j, k))
    g = Graph.from_edges(W + 2, edges, 0, W + 1, signed=True)
    return CVPGadget(g, inst, tuple(labels), lookup)


# -- congestion -------------------------------------------------------------------------


@dataclass(frozen=True)
class CongestionGadget:
    graph: Graph
    copy_of: tuple  # per edge: (copy index, original arc) or None for stitches
    n: int
    arcs: tuple
    pairs: tuple

    def routing(self, path) -> list:
        """Split an s-t path of the gadget into one arc list per pair."""
        out = [[] for _ in self.pairs]
        for e in path:
            if self.copy_of[e] is not None:
                i, a = self.copy_of[e]
                out[i].append(a)
        return out


def gen_congestion_reduction(n: int, arcs, pairs) -> CongestionGadget:
    """k stacked copies of the digraph; copy i routes pair i.

    Edge costs are indicator vectors of the original arcs (l = m), so the l_inf
    cost of a gadget path is the congestion of the routing it encodes.
    """
    arcs = tuple((int(a), int(b)) for a, b in arcs)
    pairs = tuple((int(a), int(b)) for a, b in pairs)
    m, k = len(arcs), len(pairs)
    if not k:
        raise ValueError("need at least one pair")
    edges, copy_of = [], []
    zero = (0,) * m
    for i in range(k):
        for j, (a, b) in enumerate(arcs):
            edges.append((i * n + a, i * n + b, _unit(j, m)))
            copy_of.append((i, j))
        if i + 1 < k:
            edges.append((i * n + pairs[i][1], (i + 1) * n + pairs[i + 1][0], zero))
            copy_of.append(None)
    g = Graph.from_edges(n * k, edges, pairs[0][0], (k - 1) * n + pairs[-1][1])
    return CongestionGadget(g, tuple(copy_of), n, arcs, pairs)


# -- Dijkstra counterexample -----------------------------------------------------------------


def gen_dijkstra_counterexample(n: int, eps=Fraction(1, 10)) -> Graph:
    """Chain 0 -> 1 -> ... -> n with costs e_1..e_n plus shortcuts (0, i) of cost
    (1 - eps) i e_{i+1}; l = n + 1.  Chain edges come first."""
    eps = Fraction(eps) if not isinstance(eps, float) else Fraction(eps).limit_denominator(10 ** 9)
    if n < 2 or not 0 < eps < 1:
        raise ValueError("need n >= 2 and 0 < eps < 1")
    dim = n + 1

    def vec(i, scale):  # scale * e_i, 1-based
        return tuple(scale if k == i - 1 else 0 for k in range(dim))

    edges = [(i - 1, i, vec(i, 1)) for i in range(1, n + 1)]
    edges += [(0, i, vec(i + 1, (1 - eps) * i)) for i in range(1, n + 1)]
    return Graph.from_edges(n + 1, edges, 0, n)


# -- random series-parallel graphs ---------------------------------------------------------------


def _draw_cost(rng, dim: int, law: str):
    if law == "int":
        return tuple(int(x) for x in rng.integers(0, 4, size=dim))
    if law == "binary":
        return tuple(int(x) for x in rng.integers(0, 2, size=dim))
    if law == "uniform":
        return tuple(float(x) for x in np.round(rng.random(dim), 6))
    raise ValueError(f"unknown cost law {law!r}")


def gen_random_sp(order: int, width: int, dim: int, rng, law: str = "int") -> Graph:
    """Random series-parallel graph of exactly the given order.

    ``width`` bounds the fan-out of every composition and leaf bundle.  Series
    children are never series blocks themselves, so the generating tree is
    already alternating and its order is the graph's order.  The returned
    graph's ``sp_tree`` is the generating decomposition.
    """
    if order < 0 or width < 1 or dim < 1:
        raise ValueError("bad parameters")
    if order >= 2 and width < 2:
        raise ValueError("order >= 2 needs width >= 2")

    def bundle():
        k = int(rng.integers(1, width + 1))
        return leaf(*[_draw_cost(rng, dim, law) for _ in range(k)])

    def block(h, nested=False):
        if h == 0:
            return bundle()
        k = int(rng.integers(2, max(2, width) + 1))
        top = int(rng.integers(k))
        kids = [block(h - 1, True) if i == top else block(int(rng.integers(0, h)), True)
                for i in range(k)]
        b = series(*kids)
        if nested or (width >= 2 and rng.random() < 0.5):
            b = parallel(b, block(int(rng.integers(0, h + 1))))
        return b

    return build_series_parallel(block(order))
