"""Pseudo-expectations: moment storage, conditioning and certificate checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .combinatorics import majorizes
from .graph import Path, dumps_number, loads_number
from .poly import DegreeOverflow, Monomial, Polynomial, monomial, multiply

__all__ = [
    "PseudoExpectation", "MomentTable", "DistributionExpectation",
    "ConditionedExpectation", "ConditioningError", "FeasibilityReport",
    "MajorizationResult", "from_distribution", "condition", "check_feasibility",
    "check_majorization", "product_indicator", "sum_indicator", "evaluate",
    "PSD_TOL", "NULL_TOL",
]

PSD_TOL = 1e-8
NULL_TOL = 1e-9


class ConditioningError(ValueError):
    """Conditioning on an event of (numerically) zero pseudo-probability."""


def _mono_poly(mono) -> Polynomial:
    return Polynomial({tuple(mono): 1})


def product_indicator(edges) -> Polynomial:
    """prod_{e in A} x_e; the product reading of h_A."""
    return _mono_poly(monomial(*edges))


def sum_indicator(edges) -> Polynomial:
    """sum_{e in A} x_e; the block indicator h_B."""
    edges = list(edges)
    if not edges:
        raise ValueError("empty edge set")
    return Polynomial.linear({e: 1 for e in edges})


class PseudoExpectation:
    """A linear functional on multilinear polynomials of degree <= ``degree``.

    Subclasses supply :meth:`value` on monomials and :meth:`monomials`, the
    natural support used by the feasibility checks.
    """

    degree: int

    def value(self, mono: Monomial):
        raise NotImplementedError

    def monomials(self, max_degree: int) -> list:
        raise NotImplementedError

    def _checked(self, mono) -> Monomial:
        mono = monomial(*mono)
        if len(mono) > self.degree:
            raise DegreeOverflow(mono, self.degree)
        return mono

    def __getitem__(self, mono):
        return self.value(self._checked(mono))

    def evaluate(self, f: Polynomial):
        if f.degree > self.degree:
            worst = max(f, key=len)
            raise DegreeOverflow(worst, self.degree)
        total = 0
        for mono, c in f.items():
            v = self.value(mono)
            if v:
                total = total + c * v
        return total

    __call__ = evaluate

    def moment_matrix(self, basis) -> np.ndarray:
        basis = list(basis)
        k = len(basis)
        out = np.empty((k, k), dtype=object)
        for i in range(k):
            for j in range(i, k):
                v = self[tuple(set(basis[i]) | set(basis[j]))]
                out[i, j] = out[j, i] = v
        return out

    def condition(self, g: Polynomial, tol: float = NULL_TOL) -> "ConditionedExpectation":
        return ConditionedExpectation(self, g, tol)

    def tabulate(self, monos=None) -> "MomentTable":
        monos = self.monomials(self.degree) if monos is None else monos
        return MomentTable(self.degree, {m: self.value(monomial(*m)) for m in monos})

    def to_json(self) -> str:
        table = self if isinstance(self, MomentTable) else self.tabulate()
        rows = [[list(m), dumps_number(v)] for m, v in sorted(
            table.table.items(), key=lambda kv: (len(kv[0]), kv[0]))]
        return json.dumps({"degree": self.degree, "moments": rows,
                           "zero_outside": table.zero_outside})


class MomentTable(PseudoExpectation):
    """Explicit moments over an index of monomials.

    With ``zero_outside`` the monomials absent from the index are structurally
    zero (e.g. contain an incompatible edge pair) and evaluate to 0.
    """

    def __init__(self, degree: int, table: dict, zero_outside: bool = True):
        self.degree = degree
        self.table = {monomial(*m): v for m, v in table.items()}
        self.zero_outside = zero_outside
        if () in self.table and self.table[()] != 1 and abs(self.table[()] - 1) > 1e-9:
            raise ValueError("pseudo-expectation must map 1 to 1")

    def value(self, mono):
        try:
            return self.table[mono]
        except KeyError:
            if self.zero_outside:
                return 0
            raise

    def monomials(self, max_degree: int) -> list:
        return sorted((m for m in self.table if len(m) <= max_degree),
                      key=lambda m: (len(m), m))

    def perturbed(self, mono, delta) -> "MomentTable":
        table = dict(self.table)
        mono = monomial(*mono)
        table[mono] = table.get(mono, 0) + delta
        return MomentTable(self.degree, table, self.zero_outside)

    @classmethod
    def from_json(cls, text: str) -> "MomentTable":
        obj = json.loads(text)
        table = {tuple(m): loads_number(v) for m, v in obj["moments"]}
        return cls(obj["degree"], table, obj.get("zero_outside", True))


class DistributionExpectation(PseudoExpectation):
    """True expectation under a finite distribution over s-t paths."""

    def __init__(self, graph, paths, weights, degree: int):
        self.graph = graph
        self.degree = degree
        self.paths = [frozenset(p) for p in paths]
        self.weights = list(weights)
        self._cache: dict = {}

    def value(self, mono):
        v = self._cache.get(mono)
        if v is None:
            s = set(mono)
            v = sum((w for p, w in zip(self.paths, self.weights) if s <= p), 0)
            self._cache[mono] = v
        return v

    def monomials(self, max_degree: int) -> list:
        out = set()
        for p in self.paths:
            items = sorted(p)
            for k in range(min(max_degree, len(items)) + 1):
                out.update(combinations(items, k))
        return sorted(out, key=lambda m: (len(m), m))

    def edge_marginals(self) -> dict:
        return {e: self.value((e,)) for e in range(self.graph.m)}


class ConditionedExpectation(PseudoExpectation):
    """psE[f | g] = psE[f g] / psE[g] for an SoS polynomial g."""

    def __init__(self, base: PseudoExpectation, g: Polynomial, tol: float = NULL_TOL):
        if g.degree > base.degree:
            raise DegreeOverflow(max(g, key=len), base.degree)
        self.base = base
        self.g = g
        self.degree = base.degree - g.degree
        self.denominator = base.evaluate(g)
        if not self.denominator > tol:
            raise ConditioningError(
                f"conditioning on {g} with pseudo-probability {self.denominator}")
        self._single = next(iter(g)) if len(g) == 1 else None

    def value(self, mono):
        if self._single is not None:
            c = self.g.coeff(self._single)
            merged = monomial(*mono, *self._single)
            return c * self.base.value(merged) / self.denominator
        return self.base.evaluate(multiply(_mono_poly(mono), self.g)) / self.denominator

    def monomials(self, max_degree: int) -> list:
        return self.base.monomials(max_degree)


def evaluate(pe: PseudoExpectation, f: Polynomial):
    return pe.evaluate(f)


def condition(pe: PseudoExpectation, g: Polynomial, tol: float = NULL_TOL):
    return pe.condition(g, tol)


def from_distribution(graph, paths, weights, degree: int | None = None) -> DistributionExpectation:
    """Pseudo-expectation backed by a distribution over s-t paths.

    Integer/Fraction/str weights give exact rational moments.
    """
    plist = []
    for p in paths:
        if not isinstance(p, Path):
            p = Path(graph, tuple(p))
        if not p.is_st_path():
            raise ValueError(f"{p} is not an s-t path")
        plist.append(p.edges)
    ws = [Fraction(w) if isinstance(w, (int, str, Fraction)) else w for w in weights]
    if len(ws) != len(plist):
        raise ValueError("one weight per path")
    if any(w < 0 for w in ws):
        raise ValueError("negative weight")
    total = sum(ws)
    if (total != 1) if all(isinstance(w, Fraction) for w in ws) else abs(total - 1) > 1e-12:
        raise ValueError(f"weights sum to {total}, not 1")
    if degree is None:
        degree = max(len(p) for p in plist)
    return DistributionExpectation(graph, plist, ws, degree)


# -- certificates -------------------------------------------------------------


def _psd_exact(mat) -> bool:
    """Exact PSD test for a symmetric rational matrix (pivoted LDL^T)."""
    a = [[Fraction(x) for x in row] for row in mat]
    k = len(a)
    alive = list(range(k))
    while alive:
        piv = max(alive, key=lambda i: a[i][i])
        d = a[piv][piv]
        if d < 0:
            return False
        if d == 0:
            return all(a[i][j] == 0 for i in alive for j in alive)
        alive.remove(piv)
        col = {i: a[i][piv] for i in alive}
        for i in alive:
            if col[i] == 0:
                continue
            f = col[i] / d
            row_i = a[i]
            for j in alive:
                if col[j]:
                    row_i[j] -= f * col[j]
    return True


@dataclass
class FeasibilityReport:
    min_eigenvalue: float
    max_residual: float
    violations: list = field(default_factory=list)
    tol: float = PSD_TOL
    psd_exact: bool | None = None

    @property
    def feasible(self) -> bool:
        return not self.violations


def check_feasibility(pe: PseudoExpectation, constraints=(), tol: float = PSD_TOL,
                      basis=None, multipliers=None, exact: bool | None = None
                      ) -> FeasibilityReport:
    """Moment-matrix PSD check and closed equality residuals psE[f M].

    ``basis`` defaults to the pe's monomials of degree <= degree/2 and the
    multipliers M to its monomials of degree <= degree - deg f.  Never raises on
    infeasibility; violations are listed in the report.
    """
    half = pe.degree // 2
    basis = pe.monomials(half) if basis is None else list(basis)
    mat = pe.moment_matrix(basis)
    is_exact = all(isinstance(x, (int, Fraction)) for x in mat.flat)
    fmat = mat.astype(float)
    eig = float(np.linalg.eigvalsh(fmat).min()) if len(basis) else 0.0
    violations = []
    psd_exact = None
    if exact or (exact is None and is_exact and len(basis) <= 400):
        psd_exact = _psd_exact(mat)
        if not psd_exact:
            violations.append(("psd", "exact", eig))
    elif eig < -tol:
        violations.append(("psd", "min_eigenvalue", eig))
    worst = 0.0
    pool = None
    for ci, f in enumerate(constraints):
        budget = pe.degree - f.degree
        if budget < 0:
            continue
        mons = multipliers if multipliers is not None else (
            pool if pool is not None and pool[0] >= budget else None)
        if mons is None:
            mons = pe.monomials(budget)
        else:
            mons = [m for m in (mons[1] if isinstance(mons, tuple) else mons) if len(m) <= budget]
        if multipliers is None and (pool is None or pool[0] < budget):
            pool = (budget, mons)
        for mono in mons:
            r = pe.evaluate(multiply(f, _mono_poly(mono)))
            ar = abs(float(r))
            worst = max(worst, ar)
            if ar > tol:
                violations.append(("constraint", (ci, tuple(mono)), float(r)))
    return FeasibilityReport(eig, worst, violations, tol, psd_exact)


@dataclass
class MajorizationResult:
    holds: bool
    lhs: float
    rhs: float


def check_majorization(pe: PseudoExpectation, f: Polynomial, a, b,
                       tol: float = 1e-8) -> MajorizationResult:
    """prod psE[f^{a_i}] >= prod psE[f^{b_i}] for a majorizing b, f SoS."""
    if not majorizes(a, b):
        raise ValueError(f"{tuple(a)} does not majorize {tuple(b)}")
    k = max(len(a), len(b))
    a = sorted(a, reverse=True) + [0] * (k - len(a))
    b = sorted(b, reverse=True) + [0] * (k - len(b))
    top = max(a + b)
    if f.degree * top > pe.degree:
        raise DegreeOverflow(tuple(range(f.degree * top)), pe.degree)
    moments = {}
    acc = Polynomial.const(1)
    for r in range(top + 1):
        moments[r] = pe.evaluate(acc)
        if r < top:
            acc = multiply(acc, f, pe.degree)
    lhs = 1
    rhs = 1
    for x in a:
        lhs = lhs * moments[x]
    for x in b:
        rhs = rhs * moments[x]
    return MajorizationResult(bool(lhs >= rhs - tol), float(lhs), float(rhs))
