"""Directed multigraphs with vector costs, series-parallel structure and layering.

Edges carry stable integer ids (their position in ``Graph.edges``); every map
in the package keys on edge ids, never on endpoint pairs, so parallel edges
are first-class.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

__all__ = [
    "Edge", "Graph", "Path", "Block", "LayeredGraph", "SPStructureError",
    "leaf", "series", "parallel", "build_series_parallel",
    "recognize_series_parallel", "to_layered", "compatible",
    "is_compatible_set", "lp_pow", "lp_norm", "bidirect",
    "graph_to_json", "graph_from_json", "dumps_number", "loads_number",
]


class SPStructureError(ValueError):
    """Malformed series-parallel tree."""


class Edge(NamedTuple):
    id: int
    tail: int
    head: int
    cost: tuple


def lp_pow(vec: Iterable, p) -> object:
    """Sum of |v_i|^p; exact for integer/Fraction entries and integer p."""
    if p == math.inf:
        return max((abs(v) for v in vec), default=0)
    return sum((abs(v) ** p for v in vec), 0)


def lp_norm(vec: Iterable, p) -> float:
    vec = list(vec)
    if p == math.inf:
        return float(max((abs(v) for v in vec), default=0))
    s = lp_pow(vec, p)
    if p == 1:
        return float(s)
    if p == 2:
        return math.sqrt(s)
    return float(s) ** (1.0 / p)


def _vec_add(a: tuple, b: tuple) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


@dataclass(frozen=True, eq=False)
class Graph:
    """Directed multigraph with non-negative vector edge costs.

    ``groups`` are vertex subsets (Group ATSP / Steiner inputs). ``tour``
    permits ``s == t``; ``signed`` permits negative cost entries and is only
    set by the lattice reduction generator.
    """

    n: int
    edges: tuple
    s: int
    t: int
    groups: tuple = ()
    tour: bool = False
    signed: bool = False
    sp_tree: "Block | None" = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        if not (0 <= self.s < self.n and 0 <= self.t < self.n):
            raise ValueError("terminal out of range")
        if self.s == self.t and not self.tour:
            raise ValueError("s == t requires tour=True")
        dims = set()
        for i, e in enumerate(self.edges):
            if e.id != i:
                raise ValueError(f"edge ids must be 0..m-1 in order; got {e.id} at {i}")
            if not (0 <= e.tail < self.n and 0 <= e.head < self.n):
                raise ValueError(f"edge {i} endpoint out of range")
            dims.add(len(e.cost))
            if not self.signed and any(c < 0 for c in e.cost):
                raise ValueError(f"edge {i} has a negative cost entry")
        if len(dims) > 1:
            raise ValueError(f"inconsistent cost dimensions {sorted(dims)}")
        if dims and 0 in dims:
            raise ValueError("cost vectors need at least one coordinate")
        for grp in self.groups:
            if not grp or any(not 0 <= v < self.n for v in grp):
                raise ValueError(f"bad group {grp}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable, s: int, t: int, **kw) -> "Graph":
        """Build from ``(tail, head, cost)`` triples; scalar costs become 1-vectors."""
        out = []
        for i, (u, v, c) in enumerate(edges):
            if not isinstance(c, (tuple, list)):
                c = (c,)
            out.append(Edge(i, int(u), int(v), tuple(c)))
        groups = tuple(tuple(sorted(set(g))) for g in kw.pop("groups", ()))
        return cls(n, tuple(out), s, t, groups=groups, **kw)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def dim(self) -> int:
        return len(self.edges[0].cost) if self.edges else 1

    @cached_property
    def out_edges(self) -> tuple:
        out = [[] for _ in range(self.n)]
        for e in self.edges:
            out[e.tail].append(e.id)
        return tuple(tuple(x) for x in out)

    @cached_property
    def in_edges(self) -> tuple:
        inc = [[] for _ in range(self.n)]
        for e in self.edges:
            inc[e.head].append(e.id)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def topological_order(self) -> tuple | None:
        """Kahn order (smallest vertex first), or None if the graph has a cycle."""
        import heapq

        indeg = [len(self.in_edges[v]) for v in range(self.n)]
        heap = [v for v in range(self.n) if indeg[v] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            v = heapq.heappop(heap)
            order.append(v)
            for eid in self.out_edges[v]:
                w = self.edges[eid].head
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(heap, w)
        return tuple(order) if len(order) == self.n else None

    @property
    def is_dag(self) -> bool:
        return self.topological_order is not None

    @cached_property
    def reach(self) -> tuple:
        """reach[u] = frozenset of vertices reachable from u (reflexive)."""
        succ = [set() for _ in range(self.n)]
        for e in self.edges:
            succ[e.tail].add(e.head)
        out = []
        for u in range(self.n):
            seen = {u}
            stack = [u]
            while stack:
                x = stack.pop()
                for y in succ[x]:
                    if y not in seen:
                        seen.add(y)
                        stack.append(y)
            out.append(frozenset(seen))
        return tuple(out)

    @cached_property
    def on_st_path(self) -> tuple:
        """Per edge: does it lie on some s-t walk."""
        r = self.reach
        return tuple(
            e.tail in r[self.s] and self.t in r[e.head] for e in self.edges
        )

    def edge_cost(self, eid: int) -> tuple:
        return self.edges[eid].cost

    def path(self, edge_ids: Iterable[int]) -> "Path":
        return Path(self, tuple(edge_ids))

    def with_groups(self, groups) -> "Graph":
        return Graph(self.n, self.edges, self.s, self.t,
                     tuple(tuple(sorted(set(g))) for g in groups),
                     self.tour, self.signed, self.sp_tree)


@dataclass(frozen=True, eq=False)
class Path:
    """Ordered edge sequence; cost accumulated exactly in the entries' own type."""

    graph: Graph
    edges: tuple

    def __post_init__(self):
        g = self.graph
        for a, b in zip(self.edges, self.edges[1:]):
            if g.edges[a].head != g.edges[b].tail:
                raise ValueError(f"edges {a} and {b} do not chain")

    @property
    def start(self) -> int:
        return self.graph.edges[self.edges[0]].tail if self.edges else self.graph.s

    @property
    def end(self) -> int:
        return self.graph.edges[self.edges[-1]].head if self.edges else self.graph.s

    def is_st_path(self) -> bool:
        if not self.edges:
            return self.graph.s == self.graph.t
        return self.start == self.graph.s and self.end == self.graph.t

    @property
    def vertices(self) -> tuple:
        if not self.edges:
            return (self.start,)
        return (self.start,) + tuple(self.graph.edges[e].head for e in self.edges)

    @cached_property
    def cost(self) -> tuple:
        acc = (0,) * self.graph.dim
        for e in self.edges:
            acc = _vec_add(acc, self.graph.edges[e].cost)
        return acc

    def lp_cost(self, p) -> float:
        return lp_norm(self.cost, p)

    def lp_cost_pow(self, p):
        """cost^p, exact when the costs are exact."""
        return lp_pow(self.cost, p)

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def __eq__(self, other):
        return isinstance(other, Path) and other.graph is self.graph and other.edges == self.edges

    def __hash__(self):
        return hash(self.edges)

    def __repr__(self):
        return f"Path({list(self.edges)})"


def compatible(g: Graph, e1: int, e2: int) -> bool:
    """True iff some s-t path of the DAG ``g`` contains both edges."""
    on = g.on_st_path
    if not (on[e1] and on[e2]):
        return False
    if e1 == e2:
        return True
    a, b = g.edges[e1], g.edges[e2]
    r = g.reach
    return b.tail in r[a.head] or a.tail in r[b.head]


def is_compatible_set(g: Graph, mono: Sequence[int]) -> bool:
    """All edges on one s-t path. In a DAG pairwise compatibility suffices."""
    mono = list(mono)
    if not all(g.on_st_path[e] for e in mono):
        return False
    for i in range(len(mono)):
        for j in range(i + 1, len(mono)):
            if not compatible(g, mono[i], mono[j]):
                return False
    return True


def bidirect(g: Graph) -> tuple[Graph, tuple]:
    """Replace each (undirected) edge by two opposite arcs of equal cost.

    Returns the directed graph and ``origin[arc] = undirected edge id``.
    """
    edges, origin = [], []
    for e in g.edges:
        edges.append((e.tail, e.head, e.cost))
        origin.append(e.id)
        edges.append((e.head, e.tail, e.cost))
        origin.append(e.id)
    d = Graph.from_edges(g.n, edges, g.s, g.t, groups=g.groups, tour=True)
    return d, tuple(origin)


# --------------------------------------------------------------------------
# series-parallel trees


@dataclass(frozen=True, eq=False)
class Block:
    """Node of a series-parallel decomposition.

    As a *shape* (input to :func:`build_series_parallel`) only ``kind``,
    ``children`` and leaf ``costs`` matter.  Annotated blocks (output of
    build/recognition) also carry terminals and the covered edge ids.
    """

    kind: str
    children: tuple = ()
    costs: tuple = ()
    edges: tuple = ()
    source: int | None = None
    sink: int | None = None

    @cached_property
    def order(self) -> int:
        if self.kind == "leaf":
            return 0
        h = max(c.order for c in self.children)
        return h + 1 if self.kind == "series" else h

    def blocks(self):
        """All blocks in pre-order."""
        yield self
        for c in self.children:
            yield from c.blocks()

    def shape(self) -> "Block":
        if self.kind == "leaf":
            return Block("leaf", costs=self.costs)
        return Block(self.kind, tuple(c.shape() for c in self.children))

    def to_obj(self):
        if self.kind == "leaf":
            return {"leaf": [[dumps_number(x) for x in c] for c in self.costs]}
        return {self.kind: [c.to_obj() for c in self.children]}

    @classmethod
    def from_obj(cls, obj) -> "Block":
        (kind, val), = obj.items()
        if kind == "leaf":
            return cls("leaf", costs=tuple(tuple(loads_number(x) for x in c) for c in val))
        return cls(kind, tuple(cls.from_obj(c) for c in val))

    def __repr__(self):
        if self.kind == "leaf":
            return f"leaf({len(self.costs) or len(self.edges)})"
        inner = ", ".join(repr(c) for c in self.children)
        return f"{self.kind}({inner})"


def _cost_tuple(c) -> tuple:
    return tuple(c) if isinstance(c, (tuple, list)) else (c,)


def leaf(*costs) -> Block:
    return Block("leaf", costs=tuple(_cost_tuple(c) for c in costs))


def series(*children: Block) -> Block:
    return Block("series", tuple(children))


def parallel(*children: Block) -> Block:
    return Block("parallel", tuple(children))


def _check_shape(b: Block):
    if b.kind == "leaf":
        if not b.costs:
            raise SPStructureError("leaf without edges")
        return
    if b.kind not in ("series", "parallel"):
        raise SPStructureError(f"unknown block kind {b.kind!r}")
    if len(b.children) < 2:
        raise SPStructureError(f"{b.kind} block needs at least two children")
    for c in b.children:
        _check_shape(c)


def _check_annotated(b: Block, edges: tuple):
    if b.kind == "leaf":
        for eid in b.edges:
            e = edges[eid]
            if (e.tail, e.head) != (b.source, b.sink):
                raise SPStructureError(f"leaf edge {eid} does not join its terminals")
        return
    kids = b.children
    if b.kind == "parallel":
        if any((c.source, c.sink) != (b.source, b.sink) for c in kids):
            raise SPStructureError("parallel children must share terminals")
    else:
        if kids[0].source != b.source or kids[-1].sink != b.sink:
            raise SPStructureError("series chain does not span its block")
        for x, y in zip(kids, kids[1:]):
            if x.sink != y.source:
                raise SPStructureError(f"series chain mismatch: {x.sink} != {y.source}")
    for c in kids:
        _check_annotated(c, edges)


def build_series_parallel(tree: Block) -> Graph:
    """Realize a series-parallel tree; ``graph.sp_tree`` is the annotated tree.

    Vertex 0 is the source and vertex n-1 the sink; intermediate vertices are
    numbered in depth-first order.
    """
    _check_shape(tree)
    edges: list = []
    counter = [1]
    SINK = -1

    def rec(b: Block, s: int, t: int) -> Block:
        if b.kind == "leaf":
            ids = []
            for c in b.costs:
                ids.append(len(edges))
                edges.append([s, t, tuple(c)])
            return Block("leaf", costs=b.costs, edges=tuple(ids), source=s, sink=t)
        if b.kind == "parallel":
            kids = tuple(rec(c, s, t) for c in b.children)
        else:
            cuts = [s]
            for _ in b.children[:-1]:
                cuts.append(counter[0])
                counter[0] += 1
            cuts.append(t)
            kids = tuple(rec(c, cuts[i], cuts[i + 1]) for i, c in enumerate(b.children))
        ids = tuple(sorted(x for k in kids for x in k.edges))
        return Block(b.kind, kids, edges=ids, source=s, sink=t)

    annotated = rec(tree, 0, SINK)
    n = counter[0] + 1
    t = n - 1

    def fix(v):
        return t if v == SINK else v

    def remap(b: Block) -> Block:
        return Block(b.kind, tuple(remap(c) for c in b.children), b.costs, b.edges,
                     fix(b.source), fix(b.sink))

    annotated = remap(annotated)
    g = Graph.from_edges(n, [(fix(u), fix(v), c) for u, v, c in edges], 0, t,
                         sp_tree=annotated)
    _check_annotated(annotated, g.edges)
    return g


def validate_decomposition(g: Graph, tree: Block) -> None:
    """Raise :class:`SPStructureError` unless ``tree`` is a valid annotated
    decomposition of ``g`` covering every edge exactly once."""
    _check_annotated(tree, g.edges)
    if tree.source != g.s or tree.sink != g.t:
        raise SPStructureError("root block terminals differ from the graph's")
    leaves = [e for b in tree.blocks() if b.kind == "leaf" for e in b.edges]
    if sorted(leaves) != list(range(g.m)):
        raise SPStructureError("leaves do not partition the edge set")


def _flatten(kind: str, parts: list) -> Block:
    kids = []
    for p in parts:
        if p.kind == kind:
            kids.extend(p.children)
        else:
            kids.append(p)
    if kind == "parallel":
        leaves = [k for k in kids if k.kind == "leaf"]
        others = [k for k in kids if k.kind != "leaf"]
        if len(leaves) > 1:
            ids = tuple(sorted(x for l in leaves for x in l.edges))
            merged = Block("leaf", edges=ids, source=leaves[0].source, sink=leaves[0].sink)
            kids = [merged] + others
        if len(kids) == 1:
            return kids[0]
    ids = tuple(sorted(x for k in kids for x in k.edges))
    return Block(kind, tuple(kids), edges=ids, source=kids[0].source, sink=kids[-1].sink)


def recognize_series_parallel(g: Graph) -> Block | None:
    """Canonical decomposition of a two-terminal series-parallel DAG, else None.

    Iterated parallel/series reduction; parallel reductions are applied first.
    Nested blocks of the same kind are flattened and parallel leaves merged, so
    the returned order is that of the canonical (alternating) tree.
    """
    if g.m == 0 or not g.is_dag or g.s == g.t:
        return None
    used = {g.s, g.t}
    for e in g.edges:
        used.update((e.tail, e.head))
    if len(used) != g.n:
        return None

    work = {}
    for e in g.edges:
        work[e.id] = (e.tail, e.head,
                      Block("leaf", edges=(e.id,), source=e.tail, sink=e.head))
    next_key = g.m
    changed = True
    while changed:
        changed = False
        by_pair = defaultdict(list)
        for k, (u, v, _) in work.items():
            by_pair[(u, v)].append(k)
        for (u, v), ks in by_pair.items():
            if len(ks) > 1:
                blk = _flatten("parallel", [work[k][2] for k in sorted(ks)])
                for k in ks:
                    del work[k]
                work[next_key] = (u, v, blk)
                next_key += 1
                changed = True
        if changed:
            continue
        ins, outs = defaultdict(list), defaultdict(list)
        for k, (u, v, _) in work.items():
            outs[u].append(k)
            ins[v].append(k)
        for w in sorted(set(ins) | set(outs)):
            if w in (g.s, g.t):
                continue
            if len(ins[w]) == 1 and len(outs[w]) == 1:
                k1, k2 = ins[w][0], outs[w][0]
                u, _, b1 = work[k1]
                _, v, b2 = work[k2]
                if u == v:
                    return None
                blk = _flatten("series", [b1, b2])
                del work[k1], work[k2]
                work[next_key] = (u, v, blk)
                next_key += 1
                changed = True
                break
    if len(work) != 1:
        return None
    (u, v, blk), = work.values()
    if (u, v) != (g.s, g.t):
        return None

    def fill(b: Block) -> Block:
        if b.kind == "leaf":
            return Block("leaf", costs=tuple(g.edges[e].cost for e in b.edges),
                         edges=b.edges, source=b.source, sink=b.sink)
        return Block(b.kind, tuple(fill(c) for c in b.children), edges=b.edges,
                     source=b.source, sink=b.sink)

    return fill(blk)


# --------------------------------------------------------------------------
# layered graphs


@dataclass(frozen=True, eq=False)
class LayeredGraph:
    """A layered DAG with bookkeeping back to the graph it was built from.

    ``edge_layer[e]`` is in 1..delta; ``vertex_layer[v]`` in 0..delta.
    ``edge_kind[e]`` is ``"regular"``, ``"padding"`` or ``"checkin"``;
    ``edge_origin[e]`` is the original edge id for regular edges, else None.
    ``edge_groups`` holds one edge-id tuple per check-in group.
    """

    graph: Graph
    delta: int
    vertex_layer: tuple
    vertex_origin: tuple
    edge_layer: tuple
    edge_kind: tuple
    edge_origin: tuple
    edge_groups: tuple = ()

    @cached_property
    def layers(self) -> tuple:
        out = [[] for _ in range(self.delta + 1)]
        for e, i in enumerate(self.edge_layer):
            out[i].append(e)
        return tuple(tuple(x) for x in out)

    def is_padding(self, eid: int) -> bool:
        return self.edge_kind[eid] == "padding"

    def original_walk(self, edge_ids: Iterable[int]) -> tuple:
        """Original edge ids along a layered path, padding and check-ins dropped."""
        return tuple(self.edge_origin[e] for e in edge_ids if self.edge_kind[e] == "regular")


def to_layered(g: Graph, delta: int | None = None, checkin_groups: Sequence = (),
               s: int | None = None, t: int | None = None) -> LayeredGraph:
    """Layered copy of ``g`` with ``delta`` edge layers (default n-1).

    V_0 = {s}, V_delta = {t}, every intermediate layer is a copy of V.  Copies
    of an edge (u, v) join adjacent layers; zero-cost padding edges join
    adjacent copies of t.  ``checkin_groups`` (vertex sets) add zero-cost
    check-in edges between adjacent copies of each member vertex.
    """
    s = g.s if s is None else s
    t = g.t if t is None else t
    if delta is None:
        delta = g.n - 1
    if delta < 1:
        raise ValueError("need at least one edge layer")
    vid = {}
    vlayer, vorig = [], []

    def add_vertex(layer, v):
        vid[(layer, v)] = len(vlayer)
        vlayer.append(layer)
        vorig.append(v)

    add_vertex(0, s)
    for i in range(1, delta):
        for v in range(g.n):
            add_vertex(i, v)
    add_vertex(delta, t)

    edges, elayer, ekind, eorig = [], [], [], []
    zero = (0,) * g.dim

    def add_edge(i, u, v, cost, kind, orig):
        edges.append((vid[(i - 1, u)], vid[(i, v)], cost))
        elayer.append(i)
        ekind.append(kind)
        eorig.append(orig)

    groups = [[] for _ in checkin_groups]
    for i in range(1, delta + 1):
        for e in g.edges:
            if (i - 1, e.tail) in vid and (i, e.head) in vid:
                add_edge(i, e.tail, e.head, e.cost, "regular", e.id)
        if (i - 1, t) in vid and (i, t) in vid:
            add_edge(i, t, t, zero, "padding", None)
        for gi, grp in enumerate(checkin_groups):
            for u in grp:
                if (i - 1, u) in vid and (i, u) in vid:
                    groups[gi].append(len(edges))
                    add_edge(i, u, u, zero, "checkin", None)
    lg = Graph.from_edges(len(vlayer), edges, 0, len(vlayer) - 1)
    return LayeredGraph(lg, delta, tuple(vlayer), tuple(vorig), tuple(elayer),
                        tuple(ekind), tuple(eorig), tuple(tuple(x) for x in groups))


# --------------------------------------------------------------------------
# JSON instance format


def dumps_number(x) -> str:
    """Decimal string that round-trips bit-exactly."""
    if isinstance(x, bool):
        raise TypeError("booleans are not costs")
    if isinstance(x, int):
        return str(x)
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return repr(float(x))


def loads_number(s):
    if not isinstance(s, str):
        return s
    if "/" in s:
        return Fraction(s)
    try:
        return int(s)
    except ValueError:
        return float(s)


def graph_to_json(g: Graph, **extra) -> str:
    obj = {
        "l": g.dim,
        "n": g.n,
        "s": g.s,
        "t": g.t,
        "edges": [[e.tail, e.head, [dumps_number(c) for c in e.cost]] for e in g.edges],
        "groups": [list(grp) for grp in g.groups],
    }
    if g.tour:
        obj["tour"] = True
    if g.signed:
        obj["signed"] = True
    if g.sp_tree is not None:
        obj["sp_tree"] = g.sp_tree.to_obj()
    obj.update(extra)
    return json.dumps(obj)


def graph_from_json(text: str) -> Graph:
    obj = json.loads(text) if isinstance(text, str) else text
    edges = [(u, v, tuple(loads_number(c) for c in cost)) for u, v, cost in obj["edges"]]
    g = Graph.from_edges(obj["n"], edges, obj["s"], obj["t"],
                         groups=obj.get("groups", ()), tour=obj.get("tour", False),
                         signed=obj.get("signed", False))
    if edges and len(edges[0][2]) != obj["l"]:
        raise ValueError("declared dimension l does not match the cost vectors")
    if obj.get("sp_tree"):
        rebuilt = build_series_parallel(Block.from_obj(obj["sp_tree"]))
        same = rebuilt.n == g.n and all(
            (a.tail, a.head, a.cost) == (b.tail, b.head, b.cost)
            for a, b in zip(rebuilt.edges, g.edges)) and rebuilt.m == g.m
        if same:
            g = Graph(g.n, g.edges, g.s, g.t, g.groups, g.tour, g.signed, rebuilt.sp_tree)
    return g
