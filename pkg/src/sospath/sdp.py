"""Moment relaxations of the flow polytope and a dense ADMM solver for them.

The relaxation lives on moments y_M, one per monomial M of degree <= 2d.  In
reduced mode (the default) only monomials whose edges lie on a common s-t
path are kept; every other monomial vanishes in any feasible solution, so the
reduced problem has the same optimum and the same feasible moments.

Solver outline.  The affine constraints A y = b are eliminated up front:
y = y0 + N z with N an orthonormal null-space basis, so every iterate is
affinely exact.  The moment map y -> M(y) has a diagonal Gram matrix, which
makes the y-step a cached Cholesky solve.  The PSD step projects onto the face
of the cone singled out by the constraint kernel (polynomials f*M with
deg <= d are annihilated by every feasible moment matrix).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from .graph import Graph, compatible
from .poly import DegreeOverflow, Polynomial, flow_constraints, group_indicator, lp_objective, multiply
from .pseudoexp import DistributionExpectation, MomentTable

__all__ = [
    "SDPProblem", "SolveResult", "build_relaxation", "solve", "dump_problem",
    "load_problem_arrays", "RelaxationTooLarge",
]

log = logging.getLogger(__name__)


class RelaxationTooLarge(ValueError):
    pass


@dataclass(eq=False)
class SDPProblem:
    graph: Graph
    p: int | None
    degree: int
    monomials: list
    index: dict
    basis: list
    structure: np.ndarray
    objective: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    constraints: list
    reduced: bool
    prune: object = None
    objective_poly: Polynomial | None = None
    plain: bool = True  # flow constraints only: path distributions are feasible

    @property
    def n_moments(self) -> int:
        return len(self.monomials)

    @property
    def half(self) -> int:
        return self.degree // 2


@dataclass
class SolveResult:
    pe: MomentTable
    objective: float
    iterations: int
    primal_residual: float
    psd_residual: float
    min_eigenvalue: float
    status: str
    y: np.ndarray = field(repr=False, default=None)
    polished: bool = False
    method: str = "admm"


# -- building ----------------------------------------------------------------


def _compat_masks(g: Graph, allowed) -> list:
    masks = [0] * g.m
    for a in allowed:
        for b in allowed:
            if a != b and compatible(g, a, b):
                masks[a] |= 1 << b
    return masks


def _chain_monomials(g: Graph, top: int, allowed, limit: int) -> list:
    masks = _compat_masks(g, allowed)
    out = [()]
    frontier = [((), sum(1 << e for e in allowed))]
    for _ in range(top):
        nxt = []
        for mono, cand in frontier:
            lo = mono[-1] + 1 if mono else 0
            c = cand >> lo
            e = lo
            while c:
                if c & 1:
                    m2 = mono + (e,)
                    nxt.append((m2, cand & masks[e]))
                c >>= 1
                e += 1
        if not nxt:
            break
        out.extend(m for m, _ in nxt)
        if len(out) > limit:
            raise RelaxationTooLarge(f"more than {limit} moments")
        frontier = nxt
    return out


def build_relaxation(g: Graph, p: int | None, degree: int | None = None, groups=(),
                     reduce: bool = True, objective: Polynomial | None = None,
                     extra_constraints=(), max_moments: int = 20000) -> SDPProblem:
    """Degree-``degree`` moment relaxation of min sum_i (sum_e c_e(i) x_e)^p.

    ``groups`` are edge sets R; each contributes h_R = 1 and h_R^2 = 1.
    ``objective`` replaces the l_p objective (``p`` may then be None).
    """
    if g.signed:
        raise ValueError("relaxation requires non-negative costs")
    if degree is None:
        if p is None:
            raise ValueError("degree required without p")
        degree = 2 * p
    if degree < 2 or degree % 2:
        raise ValueError("degree must be a positive even number")
    if p is not None and degree < 2 * p:
        raise DegreeOverflow(tuple(range(2 * p)), degree)
    if reduce and not g.is_dag:
        raise ValueError("reduced relaxation needs a DAG")

    if reduce:
        allowed = [e for e in range(g.m) if g.on_st_path[e]]
        monos = _chain_monomials(g, degree, allowed, max_moments)
    else:
        allowed = list(range(g.m))
        monos = [c for k in range(degree + 1) for c in combinations(allowed, k)]
        if len(monos) > max_moments:
            raise RelaxationTooLarge(f"{len(monos)} moments")
    index = {m: i for i, m in enumerate(monos)}
    prune = (lambda mono: mono not in index) if reduce else None

    if objective is None:
        if p is None:
            raise ValueError("need p or an objective")
        objective = lp_objective(g, p, degree, prune)
    elif objective.degree > degree:
        raise DegreeOverflow(max(objective, key=len), degree)
    cvec = np.zeros(len(monos))
    for mono, c in objective.items():
        if mono in index:
            cvec[index[mono]] += float(c)
        elif reduce:
            continue  # structurally zero
        else:
            raise DegreeOverflow(mono, degree)

    base = list(flow_constraints(g))
    for grp in groups:
        h = group_indicator(grp)
        base.append(h - 1)
        base.append(multiply(h, h, degree, prune) - 1)
    base.extend(extra_constraints)

    rows, seen = [], set()
    for f in base:
        budget = degree - f.degree
        for mono in monos:
            if len(mono) > budget:
                break
            q = multiply(f, Polynomial._raw({mono: 1}), degree, prune)
            if not len(q):
                continue
            terms = sorted((index[k], float(c)) for k, c in q.items())
            lead = terms[0][1]
            key = tuple((i, c / lead) for i, c in terms)
            if key in seen:
                continue
            seen.add(key)
            rows.append(terms)
    data, ri, ci = [1.0], [0], [index[()]]
    for r, terms in enumerate(rows, start=1):
        for i, c in terms:
            ri.append(r)
            ci.append(i)
            data.append(c)
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows) + 1, len(monos)))
    b = np.zeros(len(rows) + 1)
    b[0] = 1.0

    half = degree // 2
    basis = [m for m in monos if len(m) <= half]
    k = len(basis)
    structure = np.full((k, k), -1, dtype=np.int64)
    for i in range(k):
        bi = basis[i]
        for j in range(i, k):
            u = tuple(sorted(set(bi).union(basis[j])))
            v = index.get(u, -1)
            structure[i, j] = structure[j, i] = v
    return SDPProblem(g, p, degree, monos, index, basis, structure, cvec, A, b,
                      base, reduce, prune, objective,
                      plain=not groups and not extra_constraints)


# -- solving -----------------------------------------------------------------


def _null_space(A: sp.csr_matrix, b: np.ndarray, tol: float = 1e-9):
    """Orthonormal null-space basis of A and a least-squares particular solution."""
    G = (A.T @ A).toarray()
    w, V = np.linalg.eigh(G)
    scale = max(w[-1], 1.0)
    zero = w <= tol * scale
    N = V[:, zero]
    R = V[:, ~zero]
    y0 = R @ ((R.T @ (A.T @ b)) / w[~zero])
    for _ in range(3):
        r = b - A @ y0
        y0 = y0 + R @ ((R.T @ (A.T @ r)) / w[~zero])
    return N, y0


def _face_basis(prob: SDPProblem, tol: float = 1e-9) -> np.ndarray | None:
    """Orthonormal basis of the common null space of the constraint multiples.

    Every feasible moment matrix annihilates the coefficient vector of f*M
    whenever deg(f*M) <= d, so its range lies in the returned subspace.
    """
    pos = {m: i for i, m in enumerate(prob.basis)}
    ri, ci, data = [], [], []
    r = 0
    for f in prob.constraints:
        budget = prob.half - f.degree
        if budget < 0:
            continue
        for mono in prob.basis:
            if len(mono) > budget:
                break
            q = multiply(f, Polynomial._raw({mono: 1}), prob.degree, prob.prune)
            if not len(q):
                continue
            for k, c in q.items():
                ri.append(r)
                ci.append(pos[k])
                data.append(float(c))
            r += 1
    if not r:
        return None
    K = sp.csr_matrix((data, (ri, ci)), shape=(r, len(prob.basis)))
    w, V = np.linalg.eigh((K.T @ K).toarray())
    keep = w <= tol * max(w[-1], 1.0)
    return V[:, keep]


def _moment_matrix(prob: SDPProblem, y: np.ndarray) -> np.ndarray:
    idx = prob.structure
    out = np.where(idx >= 0, y[np.maximum(idx, 0)], 0.0)
    return out


def _adjoint(prob: SDPProblem, V: np.ndarray) -> np.ndarray:
    idx = prob.structure.ravel()
    keep = idx >= 0
    return np.bincount(idx[keep], weights=V.ravel()[keep], minlength=prob.n_moments)


def _psd_project(W: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((W + W.T) / 2)
    w = np.maximum(w, 0.0)
    return (V * w) @ V.T


def _min_eig(W: np.ndarray) -> float:
    if W.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh((W + W.T) / 2)[0])


def _cost_scale(prob: SDPProblem) -> float:
    sigma = max((abs(float(c)) for e in prob.graph.edges for c in e.cost), default=1.0)
    return sigma if sigma > 0 else 1.0


def _auto_interior(prob: SDPProblem, limit: int = 5000):
    # deferred: oracles depends on rounding, which depends on this module
    from .oracles import InstanceTooLarge, count_st_paths, enumerate_st_paths

    g = prob.graph
    if not prob.plain or not g.is_dag or g.s == g.t:
        return None
    try:
        if count_st_paths(g) > limit:
            return None
        paths = enumerate_st_paths(g, limit)
    except InstanceTooLarge:
        return None
    if not paths:
        return None
    return DistributionExpectation(g, paths, [1.0 / len(paths)] * len(paths), prob.degree)


BARRIER_LIMIT = 4_000_000  # k * r^2 entries of the stacked reduced LMI


class _NotInterior(Exception):
    pass


def _logdet_chol(F: np.ndarray):
    try:
        L = np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        return None
    return L


def _newton_barrier(F0, Fs, c, x, t, stop=None, max_steps=200, dec_tol=1e-10):
    """Minimize t c.x - log det(F0 + sum x_i Fs_i) from a strictly feasible x."""
    k = len(x)

    def F_of(v):
        return F0 + np.tensordot(v, Fs, axes=1)

    L = _logdet_chol(F_of(x))
    if L is None:
        raise _NotInterior
    fval = t * (c @ x) - 2 * np.log(np.diag(L)).sum()
    for _ in range(max_steps):
        Li = scipy.linalg.solve_triangular(L, np.eye(len(L)), lower=True)
        G = Li @ Fs @ Li.T
        grad = t * c - np.einsum("kii->k", G)
        Gf = G.reshape(k, -1)
        H = Gf @ Gf.T
        H[np.diag_indices(k)] += 1e-14 * max(1.0, float(np.trace(H)) / k)
        try:
            dx = -scipy.linalg.solve(H, grad, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            dx = -np.linalg.lstsq(H, grad, rcond=None)[0]
        dec = float(-grad @ dx)
        if dec / 2 <= dec_tol:
            break
        step = 1.0
        while step > 1e-12:
            xn = x + step * dx
            Ln = _logdet_chol(F_of(xn))
            if Ln is not None:
                fn = t * (c @ xn) - 2 * np.log(np.diag(Ln)).sum()
                if fn <= fval - 0.25 * step * dec:
                    break
            step *= 0.5
        else:
            break
        x, L, fval = xn, Ln, fn
        if stop is not None and stop(x):
            break
    return x


def _barrier(F0, Fs, c, z0, gap: float, max_outer: int = 40):
    """Primal log-barrier path following on F0 + sum z_i Fs_i >= 0.

    A phase-one problem (shift the LMI by s I, drive s below zero) finds a
    strictly feasible start; raises _NotInterior if none exists.
    """
    r = F0.shape[0]
    k = len(z0)
    eye = np.eye(r)
    lam = _min_eig(F0 + np.tensordot(z0, Fs, axes=1))
    if lam <= 1e-9:
        margin = 1e-7
        s0 = max(0.0, -lam) + 1.0
        x = np.concatenate([z0, [s0]])
        Fs1 = np.concatenate([Fs, eye[None]], axis=0)
        c1 = np.zeros(k + 1)
        c1[-1] = 1.0
        t = 1.0
        for _ in range(max_outer):
            x = _newton_barrier(F0, Fs1, c1, x, t, stop=lambda v: v[-1] < -margin)
            if x[-1] < -margin:
                break
            if r / t < 1e-12:
                raise _NotInterior
            t *= 10.0
        z = x[:-1]
    else:
        z = z0.copy()
    t = max(1.0, r / max(1.0, abs(float(c @ z))))
    it = 0
    for it in range(1, max_outer + 1):
        z = _newton_barrier(F0, Fs, c, z, t)
        if r / t <= gap:
            return z, it, "converged"
        t *= 8.0
    return z, it, "max-iter"


def solve(prob: SDPProblem, tol: float = 1e-9, max_iter: int = 20000, rho: float = 1.0,
          alpha: float = 1.6, interior="auto", face: bool = True,
          method: str = "auto") -> SolveResult:
    """Solve the moment problem in the reduced coordinates y = y0 + N z.

    ``method`` is ``"admm"`` (operator splitting), ``"barrier"`` (Newton
    path following on the face-reduced LMI) or ``"auto"``: barrier when the
    reduced LMI is small, with ADMM as the fallback.

    ``interior`` supplies moments of a strictly feasible point; a final convex
    shift toward it removes residual negative eigenvalues.  ``"auto"`` uses
    the uniform distribution over s-t paths when only flow constraints are
    present and the paths are few enough to list; ``None`` disables it.
    """
    if isinstance(interior, str):
        interior = _auto_interior(prob) if interior == "auto" else None
    A, b = prob.A, prob.b
    N, y0 = _null_space(A, b)
    affine = float(np.abs(A @ y0 - b).max())
    if affine > 1e-6:
        log.warning("affine constraints inconsistent (residual %.3g)", affine)
        pe = MomentTable(prob.degree, dict(zip(prob.monomials, y0)), prob.reduced)
        return SolveResult(pe, float(prob.objective @ y0), 0, affine, float("inf"),
                           float("-inf"), "infeasible-suspected", y0)

    Q = _face_basis(prob) if face else None
    if Q is not None and Q.shape[1] == 0:
        Q = np.zeros((len(prob.basis), 0))

    sigma = _cost_scale(prob)
    p_eff = prob.p if prob.p is not None else 1
    c = prob.objective / sigma ** p_eff
    cnorm = max(np.abs(c).max(), 1e-300)
    c = c / cnorm

    r = len(prob.basis) if Q is None else Q.shape[1]
    k = N.shape[1]
    if method == "auto":
        method = "barrier" if k and r and k * r * r <= BARRIER_LIMIT else "admm"
    if method == "barrier" and k and r:
        res = _solve_barrier(prob, Q, N, y0, c, tol, interior)
        if res is not None:
            y, it, status = res
            return _finish(prob, y, y0, N, Q, it, status, interior, "barrier")
        log.info("barrier found no strictly feasible point; using ADMM")

    D = np.bincount(prob.structure.ravel()[prob.structure.ravel() >= 0],
                    minlength=prob.n_moments).astype(float)
    y = y0.copy()
    if N.shape[1]:
        H = N.T @ (D[:, None] * N)
        chol = scipy.linalg.cho_factor(H)
        Nc = N.T @ c
        Dy0 = D * y0

    def face_in(W):
        return W if Q is None else Q.T @ W @ Q

    def face_out(W):
        return W if Q is None else Q @ W @ Q.T

    X = face_in(_moment_matrix(prob, y))
    U = np.zeros((r, r))
    status = "max-iter"
    it = 0
    rp = rd = float("inf")
    if N.shape[1] == 0 or r == 0:
        status = "converged"
    else:
        for it in range(1, max_iter + 1):
            rhs = N.T @ (_adjoint(prob, face_out(X - U)) - Dy0) - Nc / rho
            z = scipy.linalg.cho_solve(chol, rhs)
            y = y0 + N @ z
            S = face_in(_moment_matrix(prob, y))
            Sh = alpha * S + (1 - alpha) * X
            Xn = _psd_project(Sh + U)
            U = U + Sh - Xn
            rd = rho * float(np.linalg.norm(Xn - X))
            X = Xn
            rp = float(np.linalg.norm(S - X))
            scale = 1.0 + max(float(np.linalg.norm(S)), float(np.linalg.norm(X)))
            if rp <= tol * scale and rd <= tol * scale:
                status = "converged"
                break
            if it % 25 == 0:
                if rp > 10 * rd:
                    rho *= 2.0
                    U /= 2.0
                elif rd > 10 * rp:
                    rho /= 2.0
                    U *= 2.0
    return _finish(prob, y, y0, N, Q, it, status, interior)


def _solve_barrier(prob, Q, N, y0, c, tol, interior):
    def face_in(W):
        return W if Q is None else Q.T @ W @ Q

    F0 = face_in(_moment_matrix(prob, y0))
    Fs = np.stack([face_in(_moment_matrix(prob, N[:, i])) for i in range(N.shape[1])])
    F0 = (F0 + F0.T) / 2
    Fs = (Fs + Fs.transpose(0, 2, 1)) / 2
    cz = N.T @ c
    z0 = np.zeros(N.shape[1])
    if interior is not None:
        yc = np.array([float(interior.value(m)) for m in prob.monomials])
        z0 = N.T @ (yc - y0)
    try:
        z, it, status = _barrier(F0, Fs, cz, z0, gap=max(tol, 1e-13))
    except _NotInterior:
        return None
    return y0 + N @ z, it, status


def _finish(prob, y, y0, N, Q, it, status, interior, method="admm") -> SolveResult:
    A, b = prob.A, prob.b

    def face_in(W):
        return W if Q is None else Q.T @ W @ Q

    # snap back onto the affine space (guards against drift in z)
    if N.shape[1]:
        y = y0 + N @ (N.T @ (y - y0))

    polished = False
    lam = _min_eig(face_in(_moment_matrix(prob, y)))
    if interior is not None and lam < 0:
        yc = np.array([float(interior.value(m)) for m in prob.monomials])
        lam_c = _min_eig(face_in(_moment_matrix(prob, yc)))
        if lam_c > 1e-12:
            theta = min(1.0, (-lam + 1e-14) / (lam_c - lam))
            y = (1 - theta) * y + theta * yc
            polished = True
    M = _moment_matrix(prob, y)
    lam_full = _min_eig(M)
    affine = float(np.abs(A @ y - b).max())
    table = dict(zip(prob.monomials, (float(v) for v in y)))
    table[()] = 1.0 if abs(table[()] - 1.0) < 1e-9 else table[()]
    pe = MomentTable(prob.degree, table, zero_outside=True)
    obj = float(prob.objective @ y)
    log.debug("solve: %s after %d iterations, obj %.10g, eig %.3g", status, it, obj, lam_full)
    return SolveResult(pe, obj, it, affine, max(0.0, -lam_full), lam_full, status, y, polished,
                       method)


# -- problem dump ------------------------------------------------------------


def dump_problem(prob: SDPProblem, prefix: str) -> tuple:
    """Write ``prefix.mtx`` (constraint rows) and ``prefix.json`` (the rest)."""
    os.makedirs(os.path.dirname(os.path.abspath(prefix)), exist_ok=True)
    mtx = prefix + ".mtx"
    scipy.io.mmwrite(mtx, prob.A)
    meta = {
        "degree": prob.degree,
        "p": prob.p,
        "monomials": [list(m) for m in prob.monomials],
        "objective": prob.objective.tolist(),
        "rhs": prob.b.tolist(),
        "basis": [prob.index[m] for m in prob.basis],
        "structure": prob.structure.tolist(),
        "reduced": prob.reduced,
    }
    js = prefix + ".json"
    with open(js, "w") as fh:
        json.dump(meta, fh)
    return mtx, js


def load_problem_arrays(prefix: str) -> dict:
    with open(prefix + ".json") as fh:
        meta = json.load(fh)
    meta["A"] = sp.csr_matrix(scipy.io.mmread(prefix + ".mtx"))
    meta["structure"] = np.array(meta["structure"], dtype=np.int64)
    meta["objective"] = np.array(meta["objective"])
    meta["rhs"] = np.array(meta["rhs"])
    return meta
