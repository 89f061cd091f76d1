"""Exact stationary laws: the FCFM product form on multigraphs and the
complete p-partite closed forms.

Words are tuples of node ids, oldest first. Values are Fractions when the
measure is exact and floats otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import NotStableError, UnsupportedKindError, ValidationError
from .measures import Measure, in_ncond
from .structures import (MatchingStructure, complete_partite_partition, independent_set_masks,
                         maximal_subgraph, named, neighborhood_mask)


@dataclass
class StationaryTable:
    """Stationary probabilities of an enumerated set of states.

    ``truncated_mass`` is one minus the enumerated mass.
    """

    entries: dict
    alpha: object
    truncated_mass: float
    cap: int | None = None
    note: str = ""
    extra: dict = field(default_factory=dict)

    def rows(self):
        for w, p in self.entries.items():
            yield "".join(w) if all(len(a) == 1 for a in w) else " ".join(w), float(p)

    def to_json(self) -> dict:
        return {"alpha": float(self.alpha), "truncated_mass": float(self.truncated_mass),
                "cap": self.cap, "note": self.note,
                "entries": [{"word": list(w), "probability": float(p)}
                            for w, p in self.entries.items()]}


def _require_multigraph(g):
    if g.kind == "hypergraph":
        raise UnsupportedKindError("the product form is stated for graphs and multigraphs")


def _require_ncond(g, m):
    rep = in_ncond(g, m)
    if not rep.holds:
        raise NotStableError(f"measure is not in Ncond ({rep.status}, witness {rep.witness})")


def _weights(g, m):
    w = m.values(g)
    return w, (Fraction(1) if m.exact else 1.0)


def is_fcfm_word(g: MatchingStructure, w) -> bool:
    """Letters form an independent set of the maximal subgraph and looped
    letters occur at most once."""
    w = [str(a) for a in w]
    if any(a not in g.index for a in w):
        return False
    letters = set(w)
    if any(w.count(i) > 1 for i in g.v1 & letters):
        return False
    return not any(len(e) == 2 and e <= letters for e in g.edges)


def fcfm_unnormalized(g: MatchingStructure, m: Measure, w):
    """prod_l mu(w_l) / mu(E({w_1..w_l}))."""
    w = tuple(str(a) for a in w)
    if not is_fcfm_word(g, w):
        raise ValidationError(f"word {w} is not an admissible FCFM queue detail")
    vals, one = _weights(g, m)
    out, mask = one, 0
    for a in w:
        k = g.index[a]
        mask |= 1 << k
        nb = neighborhood_mask(g, mask)
        out *= vals[k] / sum(vals[j] for j in range(g.q) if nb >> j & 1)
    return out


def fcfm_normalizer(g: MatchingStructure, m: Measure, check: bool = True):
    """Normalizing constant alpha = Pi(empty word).

    The sum over orderings of each independent set of the maximal subgraph is
    evaluated by dynamic programming over prefix sets: the summand only
    depends on the set of letters seen so far.
    """
    _require_multigraph(g)
    if check:
        _require_ncond(g, m)
    vals, one = _weights(g, m)
    v2 = sum(1 << g.index[v] for v in g.v2)
    gc = maximal_subgraph(g)
    masks = independent_set_masks(gc)
    f = {0: one}
    total = one
    for mk in masks:  # ordered by size, so subsets come first
        nb = neighborhood_mask(g, mk)
        den = sum(vals[j] for j in range(g.q) if nb >> j & 1) - \
            sum(vals[j] for j in range(g.q) if (mk & v2) >> j & 1)
        if den <= 0:
            raise NotStableError(f"nonpositive denominator for prefix set {sorted(gc.subset(mk))}")
        acc = 0
        for j in range(g.q):
            if mk >> j & 1:
                acc += f[mk & ~(1 << j)] * vals[j]
        f[mk] = acc / den
        total += f[mk]
    return one / total


def fcfm_word_probability(g: MatchingStructure, m: Measure, w, alpha=None):
    """Stationary probability of the FCFM queue detail ``w``."""
    if alpha is None:
        alpha = fcfm_normalizer(g, m)
    return alpha * fcfm_unnormalized(g, m, w)


def fcfm_words(g: MatchingStructure, cap: int):
    """Admissible words of length at most ``cap``, by length then letters."""
    out = [()]
    frontier = [()]
    for _ in range(cap):
        nxt = []
        for w in frontier:
            for v in g.nodes:
                cand = w + (v,)
                if is_fcfm_word(g, cand):
                    nxt.append(cand)
        out += nxt
        frontier = nxt
    return out


def fcfm_table(g: MatchingStructure, m: Measure, cap: int = 10) -> StationaryTable:
    """All words up to length ``cap`` with their product-form probabilities."""
    alpha = fcfm_normalizer(g, m)
    entries = {w: alpha * fcfm_unnormalized(g, m, w) for w in fcfm_words(g, cap)}
    mass = math.fsum(float(p) for p in entries.values())
    return StationaryTable(entries, alpha, max(0.0, 1.0 - mass), cap,
                           "FCFM product form, words up to length cap")


# complete p-partite graphs: each part's total count is a birth-death chain

def _parts(g):
    if g.v1:
        raise UnsupportedKindError("closed form needs a graph without self-loops")
    parts = complete_partite_partition(g)
    if parts is None:
        raise UnsupportedKindError("graph is not complete p-partite")
    return parts


def complete_partite_pi0(g: MatchingStructure, m: Measure):
    """Empty-state probability, identical for every admissible policy.

    pi0 = [1 + sum_P mu(P) / (1 - 2 mu(P))]^-1 over the parts P.
    """
    vals, one = _weights(g, m)
    parts = _parts(g)
    acc = one
    for p in parts:
        s = sum(vals[g.index[v]] for v in p)
        if 2 * s >= 1:
            raise NotStableError(f"part {p} has mass {float(s)} >= 1/2")
        acc += s / (1 - 2 * s)
    return one / acc


def part_total_probability(g: MatchingStructure, m: Measure, part, n: int):
    """Probability that the items present all belong to ``part`` and number n >= 1."""
    vals, one = _weights(g, m)
    s = sum(vals[g.index[str(v)]] for v in part)
    return complete_partite_pi0(g, m) * (s / (1 - s)) ** n


def three_partite_pi0(g: MatchingStructure, m: Measure):
    """Product expression for the 4-node complete 3-partite graph with parts
    {2}, {3}, {1,4}; cross-checked against :func:`complete_partite_pi0`."""
    parts = _parts(g)
    if sorted(map(len, parts)) != [1, 1, 2] or g.q != 4:
        raise UnsupportedKindError("needs a complete 3-partite graph with parts of sizes 1, 1, 2")
    vals, one = _weights(g, m)
    a, b, c = (sum(vals[g.index[v]] for v in p) for p in sorted(parts, key=len))
    if max(a, b, c) * 2 > 1:
        raise NotStableError("measure violates Ncond: some part has mass > 1/2")
    # a part of mass exactly 1/2 is the null-recurrent boundary, where the formula gives 0
    return (1 - 2 * a) * (1 - 2 * b) * (1 - 2 * c) / (4 * a * b * c)


def three_partite_stationary(g: MatchingStructure, m: Measure, x, policy: str = "fcfm"):
    """Stationary probability of the class detail ``x`` (counts in node order).

    States with a single class present are geometric. The split of the
    two-class part between its classes depends on the policy; only the FCFM
    split (binomial) is available.
    """
    parts = _parts(g)
    x = [int(v) for v in x]
    if len(x) != g.q or min(x) < 0:
        raise ValidationError("bad class detail")
    pi0 = three_partite_pi0(g, m)
    present = [k for k in range(g.q) if x[k]]
    if not present:
        return pi0
    vals, one = _weights(g, m)
    for p in parts:
        idx = [g.index[v] for v in p]
        if all(k in idx for k in present):
            s = sum(vals[k] for k in idx)
            n = sum(x)
            if len(idx) == 1:
                return pi0 * (s / (1 - s)) ** n
            if policy != "fcfm":
                raise ValidationError("per-state split of a multi-class part needs FCFM")
            out = pi0 * math.comb(n, x[idx[0]]) if len(idx) == 2 else None
            if out is None:
                raise UnsupportedKindError("FCFM split implemented for two-class parts")
            return out * (vals[idx[0]] / (1 - s)) ** x[idx[0]] * (vals[idx[1]] / (1 - s)) ** x[idx[1]]
    return 0 * one  # not a reachable class detail


# hand-derived tables for the worked examples (independent of fcfm_table)

def _square_table(m, cap):
    g = named("square_loops")
    mu = dict(zip(g.nodes, m.values(g)))
    opp = {"1": "3", "2": "4", "3": "1", "4": "2"}
    inv = 1 + sum(mu[i] * (1 + mu[opp[i]]) / (1 - mu[opp[i]]) for i in "1234")
    alpha = 1 / inv
    ent = {(): alpha}
    for i in "1234":
        ent[(i,)] = alpha * mu[i] / (1 - mu[opp[i]])
    for i in "1234":
        if cap >= 2:
            ent[(i, opp[i])] = alpha * mu[i] / (1 - mu[opp[i]]) * mu[opp[i]]
    return ent, alpha, None


def _string_table(m, cap):
    g = named("string_loop3")
    mu = dict(zip(g.nodes, m.values(g)))
    m1, m2, m3 = mu["1"], mu["2"], mu["3"]
    alpha = 1 / (1 + m1 / (m2 - m1) + m2 / (1 - 2 * m2) + m3 / (1 - m1)
                 + m1 / (m2 - m1) * m3 / (1 - 2 * m1) + m3 / (1 - m1) * m1 / (1 - 2 * m1))
    ent = {(): alpha}
    for k in range(1, cap + 1):
        ent[("1",) * k] = alpha * (m1 / m2) ** k
        ent[("2",) * k] = alpha * (m2 / (1 - m2)) ** k
    for k in range(0, cap):
        for r in range(k + 1):
            w = ("1",) * r + ("3",) + ("1",) * (k - r)
            ent[w] = alpha * (m1 / m2) ** r * m3 / (1 - m1) * (m1 / (1 - m1)) ** (k - r)
    return ent, alpha, None


def _three_partite_table(m, cap):
    g = named("three_partite_4")
    mu = dict(zip(g.nodes, m.values(g)))
    m1, m2, m3, m4 = (mu[k] for k in "1234")
    d = m2 + m3
    alpha = 1 / (1 + m1 / (d - m1) + m2 / (1 - 2 * m2) + m3 / (1 - 2 * m3) + m4 / (d - m4)
                 + m1 / (d - m1) * m4 / (d - m1 - m4) + m4 / (d - m4) * m1 / (d - m1 - m4))
    ent = {(): alpha}
    for k in range(1, cap + 1):
        ent[("2",) * k] = alpha * (m2 / (1 - m2)) ** k
        ent[("3",) * k] = alpha * (m3 / (1 - m3)) ** k
    import itertools
    for n in range(1, cap + 1):
        for w in itertools.product("14", repeat=n):
            k1 = w.count("1")
            ent[w] = alpha * (m1 / d) ** k1 * (m4 / d) ** (n - k1)
    return ent, alpha, {"independent_sets": [["1"], ["2"], ["3"], ["4"], ["1", "4"]]}


EXAMPLES = {
    "square_loops": _square_table,
    "string_loop3": _string_table,
    "three_partite_4": _three_partite_table,
}


def fcfm_graph_example_table(name: str, m: Measure, cap: int = 10) -> StationaryTable:
    """Closed-form FCFM table of a worked example, written out by hand."""
    if name not in EXAMPLES:
        raise ValidationError(f"no worked example {name!r}; known: {sorted(EXAMPLES)}")
    g = named(name)
    _require_ncond(g, m)
    ent, alpha, extra = EXAMPLES[name](m, cap)
    ent = dict(sorted(ent.items(), key=lambda kv: (len(kv[0]), kv[0])))
    mass = math.fsum(float(p) for p in ent.values())
    return StationaryTable(ent, alpha, max(0.0, 1.0 - mass), cap,
                           f"closed form for {name}", extra or {})
