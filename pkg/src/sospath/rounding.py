"""Randomized rounding of pseudo-expectations into paths, tours and trees.

Three samplers:

* :func:`round_series_parallel` walks from s, leaving each vertex u along
  e with probability psE[x_e] / p_u.
* :func:`sample_edges` draws one edge per requested layer of a layered graph,
  each draw conditioned on everything fixed so far.
* :func:`find_path_layered` recursively fixes a pivots, conditions on them and
  fills in the gaps, so the degree spent grows with the recursion depth only.

On top of these sit the general-graph pipeline (:func:`solve_lp_shortest_path`)
and the Group ATSP / Group Steiner wrappers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import Graph, LayeredGraph, Path, bidirect, lp_norm, lp_pow, to_layered
from .poly import lp_objective
from .pseudoexp import NULL_TOL, ConditioningError
from .sdp import SolveResult, build_relaxation, solve

__all__ = [
    "make_rng", "spawn_rngs", "layer_probabilities", "RoundingError", "ConfigurationError", "RoundingTrace",
    "round_series_parallel", "replay", "sample_edges", "pivots", "recursion_budget",
    "find_path_layered", "layered_parameters", "LpPathResult", "solve_lp_shortest_path",
    "AtspPlan", "TourResult", "prepare_group_atsp", "sample_tour", "round_group_atsp",
    "atsp_trials", "SteinerResult", "steiner_from_atsp", "make_groups_disjoint",
]

log = logging.getLogger(__name__)

RENORM_TOL = 1e-6
CLIP_TOL = 1e-6


class RoundingError(ValueError):
    """The pseudo-expectation cannot drive the sampler (null or corrupt mass)."""


class ConfigurationError(ValueError):
    """Parameters that cannot work, detected before any sampling."""


def make_rng(seed=0) -> np.random.Generator:
    """Counter-based generator; equal seeds give identical streams."""
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed, n: int) -> list:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(n)]


# -- traces --------------------------------------------------------------------


@dataclass
class RoundingTrace:
    """Everything a sampler looked at: one entry per draw.

    Each step holds ``where`` (vertex or layer), the candidate edges, their
    probabilities, the conditioning set, the uniform draw and the chosen edge.
    """

    seed: object = None
    steps: list = field(default_factory=list)

    def record(self, where, cands, probs, cond, u, chosen):
        self.steps.append({"where": where, "candidates": list(cands),
                           "probs": [float(q) for q in probs], "conditioning": list(cond),
                           "u": float(u), "chosen": chosen})

    @property
    def uniforms(self) -> list:
        return [s["u"] for s in self.steps]

    def to_obj(self) -> dict:
        return {"seed": self.seed, "steps": self.steps}


class _ReplaySource:
    """Stands in for a Generator, returning recorded uniforms in order."""

    def __init__(self, uniforms):
        self._u = list(uniforms)
        self._i = 0

    def random(self):
        if self._i >= len(self._u):
            raise RoundingError("trace exhausted before the sampler finished")
        u = self._u[self._i]
        self._i += 1
        return u


def _draw(cands, probs, rng):
    u = float(rng.random())
    acc = np.cumsum([float(q) for q in probs])
    i = int(np.searchsorted(acc, u, side="right"))
    i = min(i, len(cands) - 1)
    while probs[i] <= 0 and i > 0:  # never land on a zero-probability edge
        i -= 1
    return cands[i], u


def _clip(vals, what):
    out = []
    for v in vals:
        v = float(v)
        if v < -CLIP_TOL:
            raise RoundingError(f"negative pseudo-probability {v:.3g} at {what}")
        out.append(max(v, 0.0))
    return out


# -- series-parallel rounding ---------------------------------------------------


def round_series_parallel(g: Graph, pe, rng, trace: RoundingTrace | None = None,
                          tol: float = NULL_TOL) -> Path:
    """Walk from s, sampling e in out(u) with probability psE[x_e] / p_u."""
    if g.topological_order is None:
        raise ValueError("rounding needs a DAG")
    u = g.s
    edges = []
    while u != g.t:
        cands = list(g.out_edges[u])
        vals = _clip([pe.value((e,)) for e in cands], f"vertex {u}")
        pu = sum(vals)
        if not pu > tol:
            raise RoundingError(f"reached vertex {u} with p_u = {pu:.3g}")
        probs = [v / pu for v in vals]
        e, draw = _draw(cands, probs, rng)
        if trace is not None:
            trace.record(u, cands, probs, tuple(edges), draw, e)
        edges.append(e)
        u = g.edges[e].head
    return Path(g, tuple(edges))


def replay(trace: RoundingTrace, g, pe, **kw):
    """Re-run a sampler from a trace's recorded uniforms.

    ``g`` is a :class:`Graph` (series-parallel sampler) or a
    :class:`LayeredGraph` (layered sampler; pass ``a``).
    """
    src = _ReplaySource(trace.uniforms)
    if isinstance(g, LayeredGraph):
        return find_path_layered(g, pe, kw.pop("a"), src, **kw)
    return round_series_parallel(g, pe, src, **kw)


# -- layered sampling ---------------------------------------------------------------


def _cond_moment(pe, cond, extra=None, mode="product"):
    """psE[x_extra * h_cond]."""
    if mode == "product":
        mono = set(cond)
        if extra is not None:
            mono.add(extra)
        return pe.value(tuple(sorted(mono)))
    if mode == "sum":
        if not cond:
            return pe.value(() if extra is None else (extra,))
        if extra is None:
            return sum(pe.value((e,)) for e in cond)
        return sum(pe.value(tuple(sorted({e, extra}))) for e in cond)
    raise ValueError(f"unknown indicator mode {mode!r}")


def layer_probabilities(vals, den, what="", mode="product", tol=NULL_TOL) -> list:
    """Normalized draw probabilities from psE[x_e h] values and psE[h].

    Values at or below tol * psE[h] are solver noise and count as zero.
    """
    exact = all(isinstance(v, (int, Fraction)) for v in (den, *vals))
    if exact:
        if any(v < 0 for v in vals):
            raise RoundingError(f"negative pseudo-probability at {what}")
        total = sum(vals)
        if mode == "product" and total != den:
            raise RoundingError(f"probabilities sum to {total / den} at {what}")
        if not total > 0:
            raise ConditioningError(f"no mass at {what}")
        return [Fraction(v) / total for v in vals]
    den = float(den)
    vals = _clip(vals, what)
    total = sum(vals)
    if mode == "product" and abs(total / den - 1) > RENORM_TOL:
        raise RoundingError(f"probabilities sum to {total / den:.9g} at {what}")
    vals = [v if v > tol * den else 0.0 for v in vals]
    total = sum(vals)
    if not total > tol:
        raise ConditioningError(f"no mass at {what}")
    return [v / total for v in vals]


def sample_edges(lg: LayeredGraph, layers, A, pe, rng, mode: str = "product",
                 trace: RoundingTrace | None = None, tol: float = NULL_TOL) -> dict:
    """One edge per layer in ``layers``, each drawn from psE_{A u R}[x_e].

    Returns ``{layer: edge}``.  The draws go in the given order; the law of
    the result does not depend on that order.
    """
    R = []
    A = tuple(A)
    out = {}
    for i in layers:
        cond = tuple(sorted(set(A) | set(R)))
        den = float(_cond_moment(pe, cond, mode=mode))
        if not den > tol:
            raise ConditioningError(f"conditioning set {cond} has mass {den:.3g}")
        cands = list(lg.layers[i])
        vals = [_cond_moment(pe, cond, e, mode) for e in cands]
        probs = layer_probabilities(vals, den, f"layer {i} given {cond}", mode, tol)
        e, draw = _draw(cands, probs, rng)
        if trace is not None:
            trace.record(i, cands, probs, cond, draw, e)
        R.append(e)
        out[i] = e
    return out


def pivots(y: int, z: int, a: int) -> list:
    """m_i = y + ceil((z - y) i / (a + 1)) for i = 1..a."""
    return [y + -(-(z - y) * i // (a + 1)) for i in range(1, a + 1)]


def _segments(y: int, z: int, ms: list) -> list:
    bounds = [y - 1] + ms + [z + 1]
    return [(bounds[i] + 1, bounds[i + 1] - 1) for i in range(len(bounds) - 1)
            if bounds[i] + 1 <= bounds[i + 1] - 1]


def recursion_budget(delta: int, a: int) -> int:
    """Largest |A| + |I| met by the layered sampler on [1, delta]."""
    def rec(y, z, depth):
        if z - y + 1 <= a:
            return depth + (z - y + 1)
        ms = pivots(y, z, a)
        return max([depth + a] + [rec(lo, hi, depth + a) for lo, hi in _segments(y, z, ms)])

    return rec(1, delta, 0)


def find_path_layered(lg: LayeredGraph, pe, a: int, rng, y: int = 1, z: int | None = None,
                      A=(), mode: str = "product", trace: RoundingTrace | None = None,
                      check_budget: bool = True) -> Path:
    """Layered rounding on layers y..z given the already fixed edges ``A``.

    Called with the defaults it returns a full s-t path of ``lg.graph``.
    """
    z = lg.delta if z is None else z
    if not 1 <= y <= z <= lg.delta:
        raise ValueError(f"bad layer range [{y}, {z}]")
    if a < 1:
        raise ConfigurationError("a must be positive")
    if check_budget:
        need = len(A) + recursion_budget(z - y + 1, a)
        if need > pe.degree // 2:
            raise ConfigurationError(
                f"recursion touches {need} edges but the pseudo-expectation has degree "
                f"{pe.degree} (needs >= {2 * need})")
    chosen = {}

    def rec(y, z, A):
        if z - y + 1 <= a:
            chosen.update(sample_edges(lg, range(y, z + 1), A, pe, rng, mode, trace))
            return
        ms = pivots(y, z, a)
        R = sample_edges(lg, ms, A, pe, rng, mode, trace)
        chosen.update(R)
        A2 = tuple(sorted(set(A) | set(R.values())))
        for lo, hi in _segments(y, z, ms):
            rec(lo, hi, A2)

    rec(y, z, tuple(A))
    edges = tuple(chosen[i] for i in range(y, z + 1))
    return Path(lg.graph, edges)


# -- general graphs -----------------------------------------------------------------


def _ceil_log(x: int, base: int) -> int:
    k, v = 0, 1
    while v < x:
        v *= base
        k += 1
    return k


def layered_parameters(delta: int, p: int, c: float) -> tuple:
    """(a, degree) with a = ceil(e^(1/c)), degree = 2(p + (a+1) ceil(log_{a+1} delta))."""
    if not 0 < c < 0.5:
        raise ConfigurationError("c must lie in (0, 1/2)")
    a = math.ceil(math.exp(1 / c))
    return a, 2 * (p + (a + 1) * _ceil_log(delta, a + 1))


def _loop_erase(g: Graph, edges) -> tuple:
    out = []
    pos = {g.edges[edges[0]].tail: 0} if edges else {}
    for e in edges:
        v = g.edges[e].head
        out.append(e)
        if v in pos:
            del out[pos[v]:]
            pos = {k: i for k, i in pos.items() if i <= pos[v]}
        else:
            pos[v] = len(out)
    return tuple(out)


@dataclass
class LpPathResult:
    path: Path
    cost: float
    sos_value: float
    trials: list
    solve: SolveResult | None
    layered: LayeredGraph
    a: int
    degree: int
    p: int

    @property
    def ratio(self) -> float:
        """Realized cost over the relaxation's lower bound (sos_value^(1/p))."""
        lb = max(self.sos_value, 0.0)
        if lb > 0:
            return self.cost / lb ** (1 / self.p)
        return 1.0 if self.cost == 0 else math.inf


def solve_lp_shortest_path(g: Graph, p: int, c: float = 0.45, trials: int | None = None,
                           rng=None, eps: float = 0.5, degree: int | None = None,
                           pe=None, solver_options: dict | None = None,
                           max_moments: int = 20000) -> LpPathResult:
    """Layered transform, relaxation, solve, then best of ``trials`` roundings.

    ``trials`` defaults to ceil(3 / eps).  A precomputed ``pe`` for the layered
    graph skips the solve.
    """
    if g.signed:
        raise ValueError("non-negative costs required")
    rng = make_rng(0) if rng is None else rng
    lg = to_layered(g)
    a, deg = layered_parameters(lg.delta, p, c)
    if degree is not None:
        deg = degree
    need = recursion_budget(lg.delta, a)
    if need > deg // 2:
        raise ConfigurationError(f"degree {deg} too small: the sampler needs {2 * need}")
    trials = math.ceil(3 / eps) if trials is None else trials
    res = None
    if pe is None:
        prob = build_relaxation(lg.graph, p, deg, max_moments=max_moments)
        res = solve(prob, **(solver_options or {}))
        if res.status == "infeasible-suspected":
            raise RoundingError("relaxation reported infeasible")
        pe, sos = res.pe, res.objective
    else:
        sos = float(pe.evaluate(lp_objective(lg.graph, p, pe.degree)))
    found = []
    for _ in range(trials):
        lp = find_path_layered(lg, pe, a, rng)
        walk = _loop_erase(g, lg.original_walk(lp.edges))
        path = Path(g, walk)
        found.append((lp_pow(path.cost, p), walk, path))
    found.sort(key=lambda x: (x[0], x[1]))
    best = found[0][2]
    return LpPathResult(best, lp_norm(best.cost, p), sos, [f[2] for f in found], res, lg,
                        a, deg, p)


# -- Group ATSP ------------------------------------------------------------------------


def make_groups_disjoint(g: Graph, groups) -> tuple:
    """Copy vertices shared by several groups so that the groups become disjoint.

    A vertex v in groups i_1 < i_2 < ... stays in i_1; for every later group a
    copy v' joined to v by zero-cost arcs in both directions takes its place.
    Returns ``(graph, groups, vertex_origin, helper_arc_ids)``.
    """
    groups = [list(dict.fromkeys(grp)) for grp in groups]
    owner = {}
    n = g.n
    edges = [(e.tail, e.head, e.cost) for e in g.edges]
    origin = list(range(g.n))
    helper = []
    zero = (0,) * g.dim
    new_groups = []
    for i, grp in enumerate(groups):
        out = []
        for v in grp:
            if v not in owner:
                owner[v] = i
                out.append(v)
                continue
            c = n
            n += 1
            origin.append(v)
            helper.extend([len(edges), len(edges) + 1])
            edges.append((v, c, zero))
            edges.append((c, v, zero))
            out.append(c)
        new_groups.append(tuple(out))
    h = Graph.from_edges(n, edges, g.s, g.s, tour=True, groups=new_groups)
    return h, new_groups, tuple(origin), frozenset(helper)


def atsp_trials(delta: int, k: int, c: float, C: float = 1.0) -> int:
    """T = max(1, ceil(C c log2(delta + 1) log2(k + 1)))."""
    return max(1, math.ceil(C * c * math.log2(delta + 1) * math.log2(k + 1)))


@dataclass
class _Guess:
    s: int
    layered: LayeredGraph
    pe: object
    solve: SolveResult | None


@dataclass
class AtspPlan:
    """Solved relaxations, one per guessed start vertex, ready for sampling."""

    graph: Graph
    groups: tuple
    p: int
    a: int
    degree: int
    T: int
    guesses: list
    work: Graph | None = None
    vertex_origin: tuple = ()
    helper_arcs: frozenset = frozenset()


@dataclass
class TourResult:
    edges: tuple
    cost: float
    covered: tuple
    status: str
    start: int | None
    walks: list = field(default_factory=list)

    @property
    def all_covered(self) -> bool:
        return all(self.covered)


def prepare_group_atsp(g: Graph, groups=None, p: int = 2, c: float = 0.45,
                       degree: int | None = None, T: int | None = None,
                       solver_options: dict | None = None, max_moments: int = 20000
                       ) -> AtspPlan:
    """Build and solve one relaxation per start vertex guessed in the last group."""
    groups = [tuple(x) for x in (g.groups if groups is None else groups)]
    if not groups or any(not grp for grp in groups):
        raise ValueError("need nonempty groups")
    k = len(groups)
    work, wgroups, vorig, helper = make_groups_disjoint(g, groups)
    delta = max(1, work.n * k - 1)
    a, deg = layered_parameters(delta, p, c)
    if degree is not None:
        deg = degree
    if k > 1:
        need = recursion_budget(delta, a)
        if need > deg // 2:
            raise ConfigurationError(f"degree {deg} too small: the sampler needs {2 * need}")
    T = atsp_trials(delta, k, c) if T is None else T
    guesses = []
    if k > 1:
        for s in sorted(wgroups[-1]):
            lg = to_layered(work, delta=delta, checkin_groups=wgroups[:-1], s=s, t=s)
            prob = build_relaxation(lg.graph, p, deg, groups=lg.edge_groups,
                                    max_moments=max_moments)
            res = solve(prob, **(solver_options or {}))
            if res.status == "infeasible-suspected":
                log.info("start %d: relaxation infeasible, skipped", s)
                continue
            guesses.append(_Guess(s, lg, res.pe, res))
        if not guesses:
            raise RoundingError("no start vertex admits a feasible relaxation")
    return AtspPlan(g, tuple(tuple(x) for x in groups), p, a, deg, T, guesses,
                    work, vorig, helper)


def _tour_from_walks(plan: AtspPlan, walks) -> tuple:
    work = plan.work
    edges = [e for w in walks for e in w]
    helper = plan.helper_arcs
    real = tuple(e for e in edges if e not in helper)
    verts = set()
    for e in edges:
        verts.add(plan.vertex_origin[work.edges[e].tail])
        verts.add(plan.vertex_origin[work.edges[e].head])
    return real, verts


def _useful_walks(plan: AtspPlan, walks, groups, start) -> list:
    """Walks in sampling order, skipping those that reach no new group."""
    hit = {i for i, grp in enumerate(groups) if start in grp}
    kept = []
    for w in walks:
        _, verts = _tour_from_walks(plan, [w])
        new = {i for i, grp in enumerate(groups) if grp & verts} - hit
        if new:
            kept.append(w)
            hit |= new
    return kept


def sample_tour(plan: AtspPlan, rng) -> TourResult:
    """T concatenated layered roundings per guess; best covering tour wins.

    Every walk is closed at the start vertex, so dropping one that reaches no
    new group leaves a closed walk with the same coverage and no larger cost.
    """
    groups = [frozenset(x) for x in plan.groups]
    k = len(groups)
    if k == 1:
        s = min(groups[0])
        return TourResult((), 0.0, (True,), "covered", s)
    best = None
    for guess in plan.guesses:
        walks = []
        for _ in range(plan.T):
            lp = find_path_layered(guess.layered, guess.pe, plan.a, rng, check_budget=False)
            walks.append(guess.layered.original_walk(lp.edges))
        start = plan.vertex_origin[guess.s]
        edges, verts = _tour_from_walks(plan, _useful_walks(plan, walks, groups, start))
        verts.add(start)
        covered = tuple(bool(grp & verts) for grp in groups)
        cost = Path(plan.graph, edges).lp_cost(plan.p) if edges else 0.0
        key = (-sum(covered), cost)
        if best is None or key < best[0]:
            status = "covered" if all(covered) else "coverage-failure"
            best = (key, TourResult(edges, cost, covered, status, start, walks))
    return best[1]


def round_group_atsp(g: Graph, groups=None, p: int = 2, c: float = 0.45, rng=None,
                     **kw) -> TourResult:
    rng = make_rng(0) if rng is None else rng
    return sample_tour(prepare_group_atsp(g, groups, p, c, **kw), rng)


# -- Group Steiner -----------------------------------------------------------------------


@dataclass
class SteinerResult:
    edges: tuple
    cost: float
    tour: TourResult
    covered: tuple


def steiner_from_atsp(g: Graph, groups=None, p: int = 2, c: float = 0.45, rng=None,
                      plan: AtspPlan | None = None, **kw) -> SteinerResult:
    """Bidirect, round a group tour, drop directions and cycle-closing edges.

    ``g`` lists each undirected edge once; returned ids refer to ``g.edges``.
    """
    rng = make_rng(0) if rng is None else rng
    groups = g.groups if groups is None else groups
    d, origin = bidirect(g)
    if plan is None:
        plan = prepare_group_atsp(d, groups, p, c, **kw)
    tour = sample_tour(plan, rng)
    parent = list(range(g.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    kept = []
    for arc in tour.edges:
        e = g.edges[origin[arc]]
        ru, rv = find(e.tail), find(e.head)
        if ru != rv:
            parent[ru] = rv
            kept.append(e.id)
    kept = tuple(kept)
    vec = (0,) * g.dim
    for e in kept:
        vec = tuple(x + y for x, y in zip(vec, g.edges[e].cost))
    verts = {g.edges[e].tail for e in kept} | {g.edges[e].head for e in kept}
    if not kept and tour.start is not None:
        verts = {tour.start}
    covered = tuple(bool(set(grp) & verts) for grp in groups)
    return SteinerResult(kept, lp_norm(vec, p), tour, covered)
