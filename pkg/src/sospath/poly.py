"""Multilinear polynomials over Boolean edge variables (x_e^2 = x_e)."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

__all__ = [
    "Monomial", "Polynomial", "DegreeOverflow", "monomial", "multiply", "power",
    "lp_objective", "linear_cost_forms", "flow_constraints", "group_indicator",
]

Monomial = tuple  # sorted, duplicate-free edge ids; () is the constant 1


class DegreeOverflow(ValueError):
    def __init__(self, mono, cap):
        super().__init__(f"monomial {mono} has degree {len(mono)} > cap {cap}")
        self.monomial = mono
        self.cap = cap


def monomial(*ids) -> Monomial:
    return tuple(sorted(set(ids)))


def _merge(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    return tuple(sorted(set(a).union(b)))


class Polynomial:
    """Immutable map Monomial -> coefficient with no stored zeros."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping | Iterable = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for mono, c in items:
            key = monomial(*mono)
            acc[key] = acc.get(key, 0) + c
        self._terms = {k: v for k, v in acc.items() if v != 0}

    @classmethod
    def _raw(cls, terms: dict) -> "Polynomial":
        p = cls.__new__(cls)
        p._terms = terms
        return p

    @classmethod
    def const(cls, c) -> "Polynomial":
        return cls({(): c})

    @classmethod
    def var(cls, e: int, coeff=1) -> "Polynomial":
        return cls({(e,): coeff})

    @classmethod
    def linear(cls, coeffs: Mapping, const=0) -> "Polynomial":
        terms = {(e,): c for e, c in coeffs.items()}
        if const:
            terms[()] = const
        return cls(terms)

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def coeff(self, mono) -> object:
        return self._terms.get(monomial(*mono), 0)

    @property
    def degree(self) -> int:
        return max((len(k) for k in self._terms), default=0)

    @property
    def variables(self) -> frozenset:
        return frozenset(e for k in self._terms for e in k)

    def __add__(self, other):
        other = _coerce(other)
        acc = dict(self._terms)
        for k, v in other._terms.items():
            nv = acc.get(k, 0) + v
            if nv == 0:
                acc.pop(k, None)
            else:
                acc[k] = nv
        return Polynomial._raw(acc)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw({k: -v for k, v in self._terms.items()})

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return multiply(self, other)
        if other == 0:
            return Polynomial._raw({})
        return Polynomial._raw({k: v * other for k, v in self._terms.items()})

    def __rmul__(self, other):
        return self * other

    def __pow__(self, k: int):
        return power(self, k)

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.const(other)
        return isinstance(other, Polynomial) and self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def evaluate(self, x) -> object:
        """Value at a 0/1 point; ``x`` maps edge id -> value (sequence or dict)."""
        total = 0
        for k, c in self._terms.items():
            v = c
            for e in k:
                v = v * x[e]
                if v == 0:
                    break
            total = total + v
        return total

    def sorted_terms(self) -> list:
        return sorted(self._terms.items(), key=lambda kv: (len(kv[0]), kv[0]))

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for i, (k, c) in enumerate(self.sorted_terms()):
            body = f"{abs(c)!s}" if not k else f"{abs(c)!s} * " + " ".join(f"x{e}" for e in k)
            neg = c < 0
            if i == 0:
                parts.append(("-" if neg else "") + body)
            else:
                parts.append((" - " if neg else " + ") + body)
        return "".join(parts)

    def __repr__(self):
        return f"Polynomial({self!s})"


def _coerce(x) -> Polynomial:
    return x if isinstance(x, Polynomial) else Polynomial.const(x)


def multiply(p: Polynomial, q: Polynomial, cap: int | None = None,
             prune: Callable[[Monomial], bool] | None = None) -> Polynomial:
    """Product reduced by x^2 = x.

    Monomials above ``cap`` raise :class:`DegreeOverflow`.  ``prune`` may flag
    monomials to drop; it must describe a monomial ideal (any superset of a
    pruned monomial is pruned), e.g. sets containing an incompatible pair.
    """
    acc: dict = {}
    for a, ca in p._terms.items():
        for b, cb in q._terms.items():
            k = _merge(a, b)
            if cap is not None and len(k) > cap:
                raise DegreeOverflow(k, cap)
            if prune is not None and prune(k):
                continue
            acc[k] = acc.get(k, 0) + ca * cb
    return Polynomial._raw({k: v for k, v in acc.items() if v != 0})


def power(p: Polynomial, k: int, cap: int | None = None, prune=None) -> Polynomial:
    if k < 0:
        raise ValueError("negative power")
    out = Polynomial.const(1)
    for _ in range(k):
        out = multiply(out, p, cap, prune)
    return out


def linear_cost_forms(g, weights=None) -> list:
    """Per coordinate i: sum_e c_e(i) x_e."""
    forms = []
    for i in range(g.dim):
        forms.append(Polynomial.linear({e.id: e.cost[i] for e in g.edges if e.cost[i] != 0}))
    return forms


def lp_objective(g, p: int, cap: int | None = None, prune=None) -> Polynomial:
    """sum_i (sum_e c_e(i) x_e)^p, reduced; every coefficient is non-negative."""
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if g.signed:
        raise ValueError("objective requires non-negative costs")
    if cap is not None and p > cap:
        raise DegreeOverflow(tuple(range(p)), cap)
    total = Polynomial()
    for form in linear_cost_forms(g):
        if len(form):
            total = total + power(form, p, cap, prune)
    return total


def flow_constraints(g) -> list:
    """Unit s-t flow equalities (each polynomial = 0): one per vertex except t."""
    out = []
    for u in range(g.n):
        if u == g.t:
            continue
        coeffs: dict = {}
        for e in g.out_edges[u]:
            coeffs[e] = coeffs.get(e, 0) + 1
        if u == g.s:
            out.append(Polynomial.linear(coeffs, const=-1))
            continue
        for e in g.in_edges[u]:
            coeffs[e] = coeffs.get(e, 0) - 1
        out.append(Polynomial.linear(coeffs))
    return out


def group_indicator(edges: Iterable[int]) -> Polynomial:
    """h_R = sum_{e in R} x_e."""
    edges = list(edges)
    if not edges:
        raise ValueError("empty group")
    return Polynomial.linear({e: 1 for e in edges})
