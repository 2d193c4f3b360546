import itertools

import numpy as np
import pytest

from sospath import (Graph, Polynomial, build_relaxation, check_feasibility, make_rng, multiply,
                     solve)
from sospath.instances import gen_random_sp, gen_tightness_tensor
from sospath.oracles import brute_force_opt
from sospath.poly import DegreeOverflow
from sospath.sdp import RelaxationTooLarge


def test_single_edge_forced():
    g = Graph.from_edges(2, [(0, 1, (3, 4))], 0, 1)
    prob = build_relaxation(g, 2, 4)
    assert prob.monomials == [(), (0,)]
    res = solve(prob)
    assert res.objective == pytest.approx(25, abs=1e-9)
    assert res.pe.value((0,)) == pytest.approx(1, abs=1e-9)


def test_parallel_pair(parallel_pair):
    res = solve(build_relaxation(parallel_pair, 2))
    assert res.objective == pytest.approx(1, abs=1e-4)


def test_chain_forced(chain3):
    res = solve(build_relaxation(chain3, 2))
    assert res.objective == pytest.approx(36, abs=1e-4)


def test_tensor_instance_optimum():
    fam = gen_tightness_tensor(1, 3)
    res = solve(build_relaxation(fam.graph, 2))
    assert res.objective == pytest.approx(3, abs=1e-3)


def test_structure_symmetric_and_closed(g1_2):
    prob = build_relaxation(g1_2, 2, 4)
    assert np.array_equal(prob.structure, prob.structure.T)
    for i, j in itertools.product(range(len(prob.basis)), repeat=2):
        u = tuple(sorted(set(prob.basis[i]) | set(prob.basis[j])))
        v = prob.structure[i, j]
        assert (prob.monomials[v] == u) if v >= 0 else u not in prob.index


def test_constraint_closure_rows(g1_2):
    prob = build_relaxation(g1_2, 2, 4, reduce=False)
    fam_rows = prob.A.shape[0]
    res = solve(prob)
    y = np.array([float(res.pe.value(m)) for m in prob.monomials])
    assert np.abs(prob.A @ y - prob.b).max() <= 1e-7
    assert fam_rows > len(prob.constraints)


def test_degree_checks(parallel_pair):
    with pytest.raises(ValueError):
        build_relaxation(parallel_pair, 2, 3)
    with pytest.raises(DegreeOverflow):
        build_relaxation(parallel_pair, 3, 4)


def test_signed_graph_rejected():
    g = Graph.from_edges(2, [(0, 1, -1)], 0, 1, signed=True)
    with pytest.raises(ValueError):
        build_relaxation(g, 2)


def test_moment_cap():
    g = gen_random_sp(2, 3, 1, make_rng(0))
    with pytest.raises(RelaxationTooLarge):
        build_relaxation(g, 2, 8, reduce=False, max_moments=50)


def _corpus():
    rng = make_rng(101)
    out = []
    while len(out) < 12:
        g = gen_random_sp(len(out) % 3, 2, 2, rng)
        if g.m <= 10:
            out.append(g)
    return out


@pytest.mark.parametrize("g", _corpus(), ids=lambda g: f"m{g.m}")
@pytest.mark.parametrize("p", [2, 3])
def test_soundness_and_feasibility(g, p):
    prob = build_relaxation(g, p)
    res = solve(prob)
    path, _ = brute_force_opt(g, p)
    opt_p = float(path.lp_cost_pow(p))
    assert res.objective <= opt_p + 1e-4 * (1 + opt_p)
    rep = check_feasibility(res.pe, prob.constraints, tol=1e-8)
    assert rep.feasible, rep.violations[:3]


def test_deterministic(g1_2):
    prob = build_relaxation(g1_2, 2)
    a, b = solve(prob), solve(prob)
    assert abs(a.objective - b.objective) <= 2e-9


def test_admm_path(parallel_pair, chain3):
    for g, target in [(parallel_pair, 1), (chain3, 36)]:
        res = solve(build_relaxation(g, 2), method="admm", interior=None)
        assert res.method == "admm"
        assert res.objective == pytest.approx(target, rel=1e-4, abs=1e-4)


def test_residuals_recomputed(g1_2):
    prob = build_relaxation(g1_2, 2)
    res = solve(prob)
    y = np.array([float(res.pe.value(m)) for m in prob.monomials])
    assert res.primal_residual == pytest.approx(float(np.abs(prob.A @ y - prob.b).max()), abs=1e-12)
    mat = res.pe.moment_matrix(prob.basis).astype(float)
    assert res.min_eigenvalue == pytest.approx(float(np.linalg.eigvalsh(mat).min()), abs=1e-9)


def test_custom_objective(parallel_pair):
    w = Polynomial.linear({0: 3.0, 1: 1.0})
    res = solve(build_relaxation(parallel_pair, None, 2, objective=multiply(w, w)))
    assert res.objective == pytest.approx(1, abs=1e-6)
