"""Partitions, multidimensional Bell numbers and the iterated Poisson process."""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np

__all__ = [
    "partitions", "multinomial", "bell", "bell_table", "approx_factor",
    "set_partitions", "refinement_chain_count", "bell_egf_coefficients",
    "iterated_poisson_sample", "iterated_poisson_samples", "asymptotic_constant",
    "majorizes", "majorizing_pairs", "labeled_partition_count",
]


def partitions(p: int) -> Iterator[tuple]:
    """Unlabeled partitions of p, each once, in decreasing lexicographic order.

    >>> list(partitions(3))
    [(3,), (2, 1), (1, 1, 1)]
    """
    if p < 0:
        raise ValueError("p must be non-negative")

    def rec(rest, largest):
        if rest == 0:
            yield ()
            return
        for first in range(min(rest, largest), 0, -1):
            for tail in rec(rest - first, first):
                yield (first,) + tail

    yield from rec(p, p)


def multinomial(n: int, parts) -> int:
    out = math.factorial(n)
    for k in parts:
        out //= math.factorial(k)
    return out


def labeled_partition_count(lam: tuple) -> int:
    """Number of set partitions of [sum(lam)] whose block sizes are ``lam``."""
    p = sum(lam)
    denom = 1
    for c in Counter(lam).values():
        denom *= math.factorial(c)
    return multinomial(p, lam) // denom


@lru_cache(maxsize=None)
def bell(d: int, p: int) -> int:
    """d-dimensional Bell number, by recursion over the first partition level."""
    if d < 0 or p < 0:
        raise ValueError("d and p must be non-negative")
    if d == 0 or p == 0:
        return 1
    total = 0
    for lam in partitions(p):
        term = labeled_partition_count(lam)
        for part in lam:
            term *= bell(d - 1, part)
        total += term
    return total


def bell_table(dmax: int, pmax: int) -> dict:
    return {(d, p): bell(d, p) for d in range(dmax + 1) for p in range(pmax + 1)}


def approx_factor(d: int, p: int) -> float:
    """bell_d(p)^(1/p), the rounding guarantee for order-d series-parallel graphs."""
    if d < 0 or p < 1:
        raise ValueError("need d >= 0 and p >= 1")
    return float(bell(d, p)) ** (1.0 / p)


def asymptotic_constant(dmax: int = 6, pmax: int = 6) -> float:
    """Smallest C with approx_factor(d, p) <= C p d^(1-1/p) over the grid."""
    return max(approx_factor(d, p) / (p * d ** (1 - 1 / p))
               for d in range(1, dmax + 1) for p in range(1, pmax + 1))


# -- brute-force side -------------------------------------------------------


def set_partitions(p: int) -> list:
    """All set partitions of {0..p-1}, each as a frozenset of frozensets."""
    out = []

    def rec(i, blocks):
        if i == p:
            out.append(frozenset(frozenset(b) for b in blocks))
            return
        for b in blocks:
            b.append(i)
            rec(i + 1, blocks)
            b.pop()
        blocks.append([i])
        rec(i + 1, blocks)
        blocks.pop()

    rec(0, [])
    return out


def _refines(fine, coarse) -> bool:
    return all(any(a <= b for b in coarse) for a in fine)


def refinement_chain_count(d: int, p: int) -> int:
    """Count tuples (P_1..P_d) of partitions of [p] with P_{i+1} refining P_i."""
    if d == 0 or p == 0:
        return 1
    parts = set_partitions(p)
    idx = {q: i for i, q in enumerate(parts)}
    finer = [[idx[f] for f in parts if _refines(f, c)] for c in parts]
    counts = [1] * len(parts)  # chains ending at each partition, length 1
    for _ in range(d - 1):
        nxt = [0] * len(parts)
        for c, cnt in enumerate(counts):
            for f in finer[c]:
                nxt[f] += cnt
        counts = nxt
    return sum(counts)


def bell_egf_coefficients(d: int, order: int) -> list:
    """bell_d(i) for i <= order read off f_d = exp(f_{d-1} - 1), f_0 = exp(x).

    Formal power series with exact rationals; independent of the recurrence.
    """
    def exp_series(a):
        # exp of a series with a[0] == 0: b' = a' b
        b = [Fraction(0)] * (order + 1)
        b[0] = Fraction(1)
        for n in range(1, order + 1):
            b[n] = sum(k * a[k] * b[n - k] for k in range(1, n + 1)) / n
        return b

    f = [Fraction(1, math.factorial(i)) for i in range(order + 1)]
    for _ in range(d):
        g = list(f)
        g[0] -= 1
        f = exp_series(g)
    return [int(f[i] * math.factorial(i)) for i in range(order + 1)]


# -- iterated Poisson --------------------------------------------------------


def iterated_poisson_sample(d: int, rng: np.random.Generator) -> int:
    """One draw of Z_d where Z_0 = 1 and Z_{i+1} ~ Pois(Z_i).

    Pois(Z) is drawn as a sum of Z independent Pois(1) variables.
    """
    z = 1
    for _ in range(d):
        z = int(rng.poisson(1.0, size=z).sum()) if z else 0
    return z


def iterated_poisson_samples(d: int, size: int, rng: np.random.Generator) -> np.ndarray:
    z = np.ones(size, dtype=np.int64)
    for _ in range(d):
        total = int(z.sum())
        draws = rng.poisson(1.0, size=total)
        owner = np.repeat(np.arange(size), z)
        z = np.bincount(owner, weights=draws, minlength=size).astype(np.int64)
    return z


# -- majorization ------------------------------------------------------------


def _pad(a, b):
    k = max(len(a), len(b))
    return (sorted(a, reverse=True) + [0] * (k - len(a)),
            sorted(b, reverse=True) + [0] * (k - len(b)))


def majorizes(a, b) -> bool:
    """a >= b in the majorization order (after sorting and zero padding)."""
    a, b = _pad(list(a), list(b))
    if sum(a) != sum(b):
        return False
    sa = sb = 0
    for x, y in zip(a, b):
        sa += x
        sb += y
        if sa < sb:
            return False
    return True


def majorizing_pairs(max_total: int) -> list:
    """All (a, b) with a != b, a majorizing b, sum <= max_total, as padded tuples."""
    out = []
    for total in range(1, max_total + 1):
        lams = list(partitions(total))
        for a in lams:
            for b in lams:
                if a != b and majorizes(a, b):
                    pa, pb = _pad(list(a), list(b))
                    out.append((tuple(pa), tuple(pb)))
    return out
