"""Command line: gen | solve | round | verify | bell | bench.

Runs print one JSON record per line; ``bell`` prints CSV.  Every stochastic
step draws from streams derived from the single ``--seed`` flag, so equal
flags give equal records (timing fields aside).
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
import time
from fractions import Fraction

from . import combinatorics as comb
from .graph import Graph, compatible, graph_from_json, graph_to_json, recognize_series_parallel
from .instances import (LatticeInstance, gen_congestion_reduction, gen_cvp_reduction,
                        gen_dijkstra_counterexample, gen_random_sp, gen_tightness_scalar,
                        gen_tightness_tensor)
from .oracles import (InstanceTooLarge, brute_force_opt, exact_cost_moments,
                      exact_rounding_law, l1_baseline, law_edge_marginals, lp_dijkstra)
from .poly import Polynomial, lp_objective, multiply
from .pseudoexp import MomentTable, check_majorization, from_distribution
from .rounding import (RoundingTrace, make_rng, round_series_parallel, solve_lp_shortest_path,
                       spawn_rngs)
from .sdp import build_relaxation, solve

BRUTE_FORCE_LIMIT = 20000


class UsageError(Exception):
    pass


def _emit(rec, out=None):
    out = out or sys.stdout
    out.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")
    out.flush()


def _jsonable(x):
    if isinstance(x, Fraction):
        return float(x)
    if hasattr(x, "item"):
        return x.item()
    raise TypeError(type(x).__name__)


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as fh:
        return fh.read()


def _write(path: str | None, text: str):
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


# -- gen ----------------------------------------------------------------------


def _family_json(fam, **extra) -> str:
    return graph_to_json(fam.graph, paths=[list(p.edges) for p in fam.paths],
                         weights=[str(w) for w in fam.weights], **extra)


def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "tightness":
        fam = (gen_tightness_tensor if args.tensor else gen_tightness_scalar)(args.h, args.N)
        text = _family_json(fam, kind="tightness-tensor" if args.tensor else "tightness")
    elif kind == "cvp":
        if args.basis:
            obj = json.loads(_read(args.basis))
            B, u = obj["B"], obj["u"]
        else:
            rng = make_rng(args.seed)
            while True:
                B = rng.integers(-args.M, args.M + 1, size=(args.n, args.d)).tolist()
                u = rng.integers(-args.M, args.M + 1, size=args.n).tolist()
                try:
                    LatticeInstance(B, u)
                    break
                except ValueError:
                    continue
        inst = LatticeInstance(B, u, args.T)
        gad = gen_cvp_reduction(inst)
        text = graph_to_json(gad.graph, kind="cvp", B=[list(r) for r in inst.B],
                             u=list(inst.u), T=inst.T, W=inst.W,
                             labels=[list(x) if x else None for x in gad.labels])
    elif kind == "dijkstra-ce":
        g = gen_dijkstra_counterexample(args.n, Fraction(args.eps))
        text = graph_to_json(g, kind="dijkstra-ce", eps=args.eps)
    elif kind == "congestion":
        obj = json.loads(_read(args.instance))
        gad = gen_congestion_reduction(obj["n"], obj["arcs"], obj["pairs"])
        text = graph_to_json(gad.graph, kind="congestion", base=obj)
    elif kind == "random-sp":
        g = gen_random_sp(args.order, args.width, args.dim, make_rng(args.seed), args.law)
        text = graph_to_json(g, kind="random-sp", order=args.order, seed=args.seed)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown kind {kind}")
    _write(args.out, text)
    return 0


# -- solve / round --------------------------------------------------------------------


def _load_instance(path: str):
    text = _read(path)
    obj = json.loads(text)
    return graph_from_json(obj), obj


def _family_pe(g: Graph, obj: dict, degree: int):
    if "paths" not in obj:
        raise UsageError("instance carries no path family (--pe family)")
    return from_distribution(g, obj["paths"], [Fraction(w) for w in obj["weights"]], degree)


def _oracle_fields(g: Graph, p, rec: dict):
    try:
        _, opt = brute_force_opt(g, p, BRUTE_FORCE_LIMIT)
        rec["opt"] = opt
    except (InstanceTooLarge, ValueError):
        rec["opt"] = None
    for name, fn in (("l1_baseline", l1_baseline), ("lp_dijkstra", lp_dijkstra)):
        try:
            rec[name] = fn(g, p)[1]
        except ValueError:
            rec[name] = None


def _order(g: Graph):
    tree = g.sp_tree or recognize_series_parallel(g)
    return tree.order if tree is not None else None


def cmd_solve(args) -> int:
    g, obj = _load_instance(args.instance)
    if g.signed:
        raise UsageError("solve needs non-negative costs (signed instance given)")
    p = args.p
    t0 = time.perf_counter()
    rngs = spawn_rngs(args.seed, 2)
    rec = {"instance": args.instance, "p": p, "seed": args.seed, "n": g.n, "m": g.m,
           "l": g.dim}
    method = args.method
    if method == "auto":
        method = "sp" if g.is_dag and g.s != g.t else "layered"
    rec["method"] = method
    timing = {}
    if method == "layered":
        res = solve_lp_shortest_path(g, p, c=args.c, trials=args.trials, rng=rngs[0],
                                     degree=args.degree)
        rec.update(sos_value=res.sos_value, cost=res.cost, path=list(res.path.edges),
                   degree=res.degree, a=res.a, status=res.solve.status if res.solve else "given")
    else:
        degree = args.degree or 2 * p
        if args.pe == "family":
            pe = _family_pe(g, obj, degree)
            sos = pe.evaluate(lp_objective(g, p, degree))
            rec["status"] = "given"
        else:
            t1 = time.perf_counter()
            prob = build_relaxation(g, p, degree)
            sres = solve(prob, tol=args.tol)
            timing["solve"] = time.perf_counter() - t1
            pe, sos = sres.pe, sres.objective
            rec.update(status=sres.status, iterations=sres.iterations,
                       min_eigenvalue=sres.min_eigenvalue, n_moments=prob.n_moments)
            if args.dump_pe:
                _write(args.dump_pe, pe.to_json())
        trials = args.trials or 6
        best = None
        for _ in range(trials):
            path = round_series_parallel(g, pe, rngs[0])
            key = (path.lp_cost_pow(p), path.edges)
            if best is None or key < best[0]:
                best = (key, path)
        path = best[1]
        ex = exact_cost_moments(g, pe, p)
        rec.update(sos_value=sos, cost=path.lp_cost(p), path=list(path.edges), degree=degree,
                   expected_cost_pow=ex, trials=trials)
        if sos:
            rec["expected_ratio"] = ex / sos
        h = _order(g)
        if h is not None:
            rec["order"] = h
            rec["bell_bound"] = comb.bell(h, p)
            rec["approx_factor"] = comb.approx_factor(max(h, 1), p)
    if not args.no_oracles:
        _oracle_fields(g, p, rec)
        if rec.get("opt"):
            rec["ratio"] = rec["cost"] / rec["opt"]
    timing["total"] = time.perf_counter() - t0
    rec["timing"] = timing
    _emit({k: _finite(v) if isinstance(v, float) else v for k, v in rec.items()})
    return 0


def cmd_round(args) -> int:
    g, obj = _load_instance(args.instance)
    if args.pe == "family":
        pe = _family_pe(g, obj, 2 * args.p)
    else:
        pe = MomentTable.from_json(_read(args.pe))
    traces = []
    for i, rng in enumerate(spawn_rngs(args.seed, args.runs)):
        tr = RoundingTrace(seed=[args.seed, i])
        path = round_series_parallel(g, pe, rng, trace=tr)
        traces.append(tr.to_obj())
        _emit({"run": i, "seed": args.seed, "path": list(path.edges),
               "cost": path.lp_cost(args.p), "cost_pow": float(path.lp_cost_pow(args.p))})
    if args.trace:
        _write(args.trace, json.dumps(traces))
    return 0


# -- verify ---------------------------------------------------------------------------------


def _random_sp_corpus(seed, count, max_order=2, width=2, dim=2, max_edges=14):
    rng = make_rng(seed)
    out = []
    while len(out) < count:
        g = gen_random_sp(len(out) % (max_order + 1), width, dim, rng)
        if g.m <= max_edges:
            out.append(g)
    return out


def verify_bell(seed, samples) -> list:
    out = []
    for d in range(0, 4):
        for p in range(0, 7):
            a, b = comb.bell(d, p), comb.refinement_chain_count(d, p)
            out.append({"check": f"bell({d},{p})", "ok": a == b, "value": a})
    return out


def verify_poisson(seed, samples) -> list:
    rng = make_rng(seed)
    out = []
    for d in range(1, 4):
        z = comb.iterated_poisson_samples(d, samples, rng).astype(float)
        for p in range(1, 4):
            zp = z ** p
            se = zp.std(ddof=1) / math.sqrt(samples)
            mean = float(zp.mean())
            out.append({"check": f"E[Z_{d}^{p}]", "ok": abs(mean - comb.bell(d, p)) <= 3 * se,
                        "mean": mean, "bell": comb.bell(d, p), "se": se})
    return out


def verify_marginals(seed, samples) -> list:
    out = []
    for i, g in enumerate(_random_sp_corpus(seed, samples)):
        res = solve(build_relaxation(g, 2))
        marg = law_edge_marginals(exact_rounding_law(g, res.pe), g.m)
        err = max(abs(marg[e] - res.pe.value((e,))) for e in range(g.m))
        out.append({"check": f"marginals[{i}]", "ok": err <= 1e-10, "err": err})
    return out


def flow_cost_polynomial(g: Graph) -> Polynomial:
    """sum_e ||c_e||_1 x_e."""
    return Polynomial.linear({e.id: sum(e.cost) for e in g.edges if sum(e.cost)})


def majorization_samples(seed, count, degree=8):
    """(graph, pe) pairs from SDP solves with random objectives."""
    rng = make_rng(seed)
    out = []
    for g in _random_sp_corpus(seed, count, max_order=2, max_edges=10):
        w = {e: float(rng.random()) for e in range(g.m)}
        f = Polynomial.linear(w)
        obj = Polynomial.const(0)
        for _ in range(int(rng.integers(1, 3))):
            obj = obj + multiply(f, f, degree)
        res = solve(build_relaxation(g, None, degree, objective=obj))
        out.append((g, res.pe))
    return out


def verify_majorization(seed, samples) -> list:
    out = []
    pairs = comb.majorizing_pairs(4)
    for i, (g, pe) in enumerate(majorization_samples(seed, samples)):
        f = flow_cost_polynomial(g)
        worst = math.inf
        for a, b in pairs:
            r = check_majorization(pe, f, a, b, tol=1e-8)
            worst = min(worst, r.lhs - r.rhs)
        out.append({"check": f"majorization[{i}]", "ok": worst >= -1e-8, "slack": worst})
    return out


def _monotone_cuts(g: Graph, block):
    verts = sorted({g.edges[e].tail for e in block.edges} | {g.edges[e].head for e in block.edges})
    inner = [v for v in verts if v not in (block.source, block.sink)]
    for r in range(len(inner) + 1):
        for extra in itertools.combinations(inner, r):
            S = {block.source, *extra}
            if any(g.edges[e].head in S and g.edges[e].tail not in S for e in block.edges):
                continue
            yield [e for e in block.edges
                   if g.edges[e].tail in S and g.edges[e].head not in S]


def verify_flow_basics(seed, samples) -> list:
    out = []
    for i, g in enumerate(_random_sp_corpus(seed, samples, max_edges=7)):
        prob = build_relaxation(g, 2, 4, reduce=False)
        pe = solve(prob).pe
        worst = 0.0
        for e1, e2 in itertools.combinations(range(g.m), 2):
            if compatible(g, e1, e2):
                continue
            for mono in pe.monomials(2):
                worst = max(worst, abs(pe.value(tuple(sorted({e1, e2, *mono})))))
        spread = 0.0
        for block in g.sp_tree.blocks():
            cuts = list(_monotone_cuts(g, block))
            for mono in pe.monomials(3):
                vals = [sum(pe.value(tuple(sorted({e, *mono}))) for e in cut) for cut in cuts]
                spread = max(spread, max(vals) - min(vals))
        out.append({"check": f"flow-basics[{i}]", "ok": worst <= 1e-7 and spread <= 1e-7,
                    "incompatible": worst, "cut_spread": spread})
    return out


SUITES = {
    "bell": verify_bell,
    "poisson": verify_poisson,
    "marginals": verify_marginals,
    "majorization": verify_majorization,
    "flow-basics": verify_flow_basics,
}
SUITE_DEFAULT_SAMPLES = {"poisson": 200_000, "marginals": 20, "majorization": 20,
                         "flow-basics": 10, "bell": 0}


def cmd_verify(args) -> int:
    samples = args.samples if args.samples is not None else SUITE_DEFAULT_SAMPLES[args.suite]
    results = SUITES[args.suite](args.seed, samples)
    for r in results:
        _emit(r)
    ok = all(r["ok"] for r in results)
    _emit({"suite": args.suite, "seed": args.seed, "checks": len(results), "passed": ok})
    return 0 if ok else 1


# -- bell / bench ------------------------------------------------------------------------------


def cmd_bell(args) -> int:
    print("d," + ",".join(f"p={p}" for p in range(args.p + 1)))
    for d in range(args.d + 1):
        print(f"{d}," + ",".join(str(comb.bell(d, p)) for p in range(args.p + 1)))
    return 0


def cmd_bench(args) -> int:
    if args.corpus == "tightness":
        for N in args.N or [2, 5, 10, 20, 50]:
            fam = gen_tightness_scalar(1, N)
            pe = from_distribution(fam.graph, fam.paths, fam.weights, 2 * args.p)
            sos = pe.evaluate(lp_objective(fam.graph, args.p, 2 * args.p))
            ex = exact_cost_moments(fam.graph, pe, args.p)
            _emit({"corpus": "tightness", "N": N, "p": args.p, "sos_value": sos,
                   "expected_cost_pow": ex, "ratio": ex / sos, "bell": comb.bell(1, args.p)})
        return 0
    failures = 0
    for i, g in enumerate(_random_sp_corpus(args.seed, args.count, args.max_order,
                                            max_edges=args.max_edges)):
        t0 = time.perf_counter()
        prob = build_relaxation(g, args.p)
        res = solve(prob)
        ex = exact_cost_moments(g, res.pe, args.p)
        h = g.sp_tree.order
        bound = comb.bell(h, args.p) * res.objective + 1e-6
        _, opt = brute_force_opt(g, args.p)
        rec = {"corpus": "random-sp", "index": i, "seed": args.seed, "order": h, "m": g.m,
               "p": args.p, "sos_value": res.objective, "opt_pow": opt ** args.p,
               "expected_cost_pow": ex, "bell_bound": bound, "ok": ex <= bound,
               "l1_ratio": l1_baseline(g, args.p)[1] / opt if opt else 1.0,
               "timing": {"total": time.perf_counter() - t0}}
        failures += not rec["ok"]
        _emit(rec)
    return 1 if failures else 0


# -- parser ----------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sospath", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate an instance (JSON)")
    g.add_argument("kind", choices=["tightness", "cvp", "dijkstra-ce", "congestion", "random-sp"])
    g.add_argument("--out", "-o")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--h", type=int, default=1)
    g.add_argument("--N", type=int, default=2)
    g.add_argument("--tensor", action="store_true")
    g.add_argument("--basis", help="JSON file with B and u")
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--M", type=int, default=3)
    g.add_argument("--T", type=int)
    g.add_argument("--eps", default="1/10")
    g.add_argument("--instance", help="JSON with n, arcs, pairs")
    g.add_argument("--order", type=int, default=1)
    g.add_argument("--width", type=int, default=2)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--law", choices=["int", "binary", "uniform"], default="int")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="relax, solve, round and compare with oracles")
    s.add_argument("instance")
    s.add_argument("--p", type=int, default=2)
    s.add_argument("--c", type=float, default=0.45)
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--degree", type=int)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--method", choices=["auto", "sp", "layered"], default="auto")
    s.add_argument("--pe", choices=["sdp", "family"], default="sdp")
    s.add_argument("--dump-pe")
    s.add_argument("--no-oracles", action="store_true")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("round", help="round a stored pseudo-expectation")
    r.add_argument("instance")
    r.add_argument("--pe", required=True, help="moment JSON file, or 'family'")
    r.add_argument("--p", type=int, default=2)
    r.add_argument("--runs", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trace")
    r.set_defaults(func=cmd_round)

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("suite", choices=sorted(SUITES))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--samples", type=int)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bell", help="bell_d(p) table as CSV")
    b.add_argument("--d", type=int, default=4)
    b.add_argument("--p", type=int, default=6)
    b.set_defaults(func=cmd_bell)

    bn = sub.add_parser("bench", help="corpus runs against the oracles")
    bn.add_argument("--corpus", choices=["random-sp", "tightness"], default="random-sp")
    bn.add_argument("--count", type=int, default=20)
    bn.add_argument("--max-order", type=int, default=2)
    bn.add_argument("--max-edges", type=int, default=14)
    bn.add_argument("--p", type=int, default=2)
    bn.add_argument("--N", type=int, nargs="*")
    bn.add_argument("--seed", type=int, default=0)
    bn.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"sospath {args.cmd}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
