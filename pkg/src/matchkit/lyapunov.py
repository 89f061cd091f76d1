"""Quadratic Lyapunov drift coefficients for incomplete 3-uniform
hypergraphs under match-the-longest.

The structure is the complete 3-uniform hypergraph of order q >= 5 minus a
family ``J`` of pairwise disjoint hyperedges. The drift of
``Q(x) = sum x_i^2`` over four arrivals from ``x e_i`` is affine in ``x`` for
``x >= 4``; its slope is computed exactly by enumerating the ``q^4`` arrival
sequences, ties of the policy included.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedKindError, ValidationError
from .measures import Measure, in_n2, in_n3
from .policies import PolicySpec, _partners, compile_policy
from .structures import MatchingStructure

SKELETON = 4


def incomplete_3uniform(q: int, removed=()) -> MatchingStructure:
    """Complete 3-uniform hypergraph on ``1..q`` without the triples ``removed``."""
    nodes = tuple(str(i) for i in range(1, q + 1))
    gone = {frozenset(str(v) for v in e) for e in removed}
    for e in gone:
        if len(e) != 3 or not e <= set(nodes):
            raise ValidationError(f"{sorted(e)} is not a triple of 1..{q}")
    edges = tuple(frozenset(c) for c in itertools.combinations(nodes, 3) if frozenset(c) not in gone)
    return MatchingStructure(nodes, edges)


def removed_family(h: MatchingStructure) -> list:
    """The disjoint triples missing from a complete 3-uniform hypergraph.

    Raises UnsupportedKindError when ``h`` does not have that shape.
    """
    if h.q < 5:
        raise UnsupportedKindError("needs order q >= 5")
    if any(len(e) != 3 for e in h.edges):
        raise UnsupportedKindError("needs a 3-uniform hypergraph")
    have = set(h.edges)
    missing = [frozenset(c) for c in itertools.combinations(h.nodes, 3) if frozenset(c) not in have]
    seen = set()
    for e in missing:
        if e & seen:
            raise UnsupportedKindError("removed hyperedges are not pairwise disjoint")
        seen |= e
    return sorted(missing, key=lambda e: sorted(h.index[v] for v in e))


def ratio_bound(q: int) -> float:
    """((2q^4 - 9q^3 + 12q^2 - 13q + 12) / (6q^2 + 10q + 24))^(1/4)."""
    return ((2 * q ** 4 - 9 * q ** 3 + 12 * q ** 2 - 13 * q + 12) / (6 * q ** 2 + 10 * q + 24)) ** 0.25


def quadratic_drift(h: MatchingStructure, p, m: Measure, x, steps: int = SKELETON) -> float:
    """E[Q(X_steps) - Q(X_0) | X_0 = x] by exhaustive enumeration."""
    from .oracle import choice_distribution
    cp = compile_policy(h, PolicySpec.parse(p) if isinstance(p, str) else p)
    mm = m.normalized() if m.mode == "intensity" else m
    probs = mm.vector(h)
    x = np.asarray(x, dtype=np.int64)
    q0 = float((x ** 2).sum())
    acc = []

    def rec(y, pr, t):
        if t == steps:
            acc.append(pr * float((y ** 2).sum()))
            return
        for k in range(h.q):
            ch = choice_distribution(h, cp, y, k)
            if not ch:
                z = y.copy()
                z[k] += 1
                rec(z, pr * probs[k], t + 1)
                continue
            for c, j in ch:
                z = y.copy()
                for i in _partners(h, j, k):
                    z[i] -= 1
                rec(z, pr * probs[k] * c, t + 1)

    rec(x, 1.0, 0)
    return math.fsum(acc) - q0


def drift_slope(h, p, m, support, steps: int = SKELETON, base: int = 2 * SKELETON):
    """Slopes of the drift in each coordinate of ``support`` around a large state."""
    x = np.zeros(h.q, dtype=np.int64)
    for v in support:
        x[h.index[str(v)]] = base
    d0 = quadratic_drift(h, p, m, x, steps)
    out = {}
    for v in support:
        y = x.copy()
        y[h.index[str(v)]] += 1
        out[str(v)] = quadratic_drift(h, p, m, y, steps) - d0
    return out


def printed_lambda(h: MatchingStructure, m: Measure, i) -> float:
    """The closed polynomial for a class outside ``J``, sums read over
    unordered sets of distinct classes other than ``i``."""
    mu = dict(zip(h.nodes, (float(v) for v in m.normalized().values(h))))
    a = mu[str(i)]
    o = [mu[v] for v in h.nodes if v != str(i)]

    def c(f, r):
        return math.fsum(f(*t) for t in itertools.combinations(o, r))

    return (8 * a ** 4 + 24 * a ** 3 * sum(o) + 24 * a ** 2 * sum(v ** 2 for v in o)
            + 8 * a * sum(v ** 3 for v in o) + 24 * a ** 2 * c(lambda j, k: j * k, 2)
            - 44 * c(lambda j, k, l: j * j * k * l, 3) - 24 * c(lambda j, k: j * j * k * k, 2)
            - 8 * c(lambda j, k: j * k ** 3, 2) - 96 * c(lambda j, k, l, n: j * k * l * n, 4))


@dataclass
class LyapunovTable:
    q: int
    removed: list
    lambda_: dict           # classes outside J
    nu: dict                # classes inside J
    lambda_printed: dict
    lambda_pair: dict       # "i,j" -> coefficient of x_i, pairs not inside a removed triple
    nu_pair: dict           # pairs inside a removed triple
    alpha: dict             # "i,j,k" -> {i: .., j: .., k: ..}
    ratio: float
    ratio_bound: float
    in_s: bool
    in_s1: bool
    n2: dict
    n3: dict
    note: str = "sufficient only: membership implies stability, not conversely"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["lambda"] = d.pop("lambda_")
        d["removed"] = [sorted(e, key=int) if all(v.isdigit() for v in e) else sorted(e)
                        for e in self.removed]
        return d


def lyapunov_coefficients(h: MatchingStructure, m: Measure) -> LyapunovTable:
    """Drift coefficients, closed pairwise coefficients and the two
    sufficient stability verdicts."""
    removed = removed_family(h)
    mm = m.normalized() if m.mode == "intensity" else m
    mu = dict(zip(h.nodes, (float(v) for v in mm.values(h))))
    inJ = set().union(*removed) if removed else set()
    lam, nu, printed = {}, {}, {}
    for v in h.nodes:
        slope = drift_slope(h, "ml", mm, [v])[v]
        if v in inJ:
            nu[v] = slope
        else:
            lam[v] = slope
            printed[v] = printed_lambda(h, mm, v)
    pair_l, pair_n, alpha = {}, {}, {}
    for a, b in itertools.combinations(h.nodes, 2):
        H = next((e for e in removed if {a, b} <= e), None)
        rest = [v for v in h.nodes if v not in ({a, b} if H is None else H)]
        s = math.fsum(mu[v] for v in rest)
        coef = {a: 2 * (mu[a] - s), b: 2 * (mu[b] - s)}
        (pair_l if H is None else pair_n)[f"{a},{b}"] = coef
    for H in removed:
        i, j, k = sorted(H, key=h.index.get)
        s = math.fsum(mu[v] for v in h.nodes if v not in H)
        alpha[f"{i},{j},{k}"] = {i: 2 * (mu[i] - s), j: 2 * (mu[j] - s), k: 2 * mu[k]}
    n2 = in_n2(h, mm)
    n3 = in_n3(h, mm, strict=True)
    vals = list(mu.values())
    ratio = max(vals) / min(vals)
    bound = ratio_bound(h.q)
    neg = max(list(lam.values()) + list(nu.values())) < 0
    return LyapunovTable(h.q, removed, lam, nu, printed, pair_l, pair_n, alpha, ratio, bound,
                         bool(neg and n2.holds and n3.holds),
                         bool(ratio < bound and n2.holds and n3.holds),
                         n2.to_json(), n3.to_json())


def monte_carlo_drift(h: MatchingStructure, m: Measure, v, x: int = 50, resets: int = 20000,
                      seed: int = 0) -> float:
    """Estimate of 2 E[Y_1(v) - x] from ``x e_v`` under match-the-longest,
    the leading slope of the quadratic drift."""
    from .simulate import SimConfig, run
    c = SimConfig(steps=SKELETON * resets, seed=seed, x0={str(v): x}, reset_every=SKELETON,
                  threads=1)
    r = run(h, "ml", m, c)
    return 2.0 * r.aggregate["drift_increment"][h.index[str(v)]]
