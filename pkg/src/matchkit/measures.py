"""Measures on node sets and the stability-condition checkers.

Every checker returns a :class:`ConditionReport`. Rational inputs (ints,
Fractions, strings such as ``"1/3"``) are evaluated exactly; float inputs
use an absolute tolerance ``TOL`` and report equality cases as
``"boundary"`` rather than as holding.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import NumericError, UnsupportedKindError, ValidationError
from .structures import (MatchingStructure, _mask_order, copy_node, hall_violation,
                         independent_set_masks, minimal_blowup, neighborhood_mask,
                         rank_antirank, transversal_number)

TOL = 1e-12

__all__ = ["Measure", "ConditionReport", "TOL", "in_ncond", "in_ncond_c", "in_n1_family",
           "in_n2", "in_n3", "hall_violation", "hall_report", "hall_threshold",
           "extend_measure", "reduce_measure", "find_ncond_measure", "uniform",
           "ncond_margins", "n1_margins", "n1p_margins", "n1pp_margins", "n2_margins",
           "independent_matrices"]


def _coerce(x):
    if isinstance(x, bool):
        raise ValidationError("boolean is not a weight")
    if isinstance(x, (int, Fraction)):
        return Fraction(x), True
    if isinstance(x, str):
        try:
            return Fraction(x.strip()), True
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"cannot parse weight {x!r}") from None
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise ValidationError(f"cannot parse weight {x!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"non-finite weight {x!r}")
    return v, False


@dataclass(frozen=True)
class Measure:
    """Weights on nodes.

    ``mode="probability"`` needs weights summing to one; ``"intensity"``
    only positivity. ``full_support=False`` admits zero weights, which the
    extended measures of a blow-up need when a split is 0 or 1.
    """

    weights: Mapping
    mode: str = "probability"
    full_support: bool = True
    exact: bool = field(init=False)

    def __post_init__(self):
        if self.mode not in ("probability", "intensity"):
            raise ValidationError(f"unknown measure mode {self.mode!r}")
        w, exact = {}, True
        for k, v in dict(self.weights).items():
            val, ex = _coerce(v)
            exact &= ex
            w[str(k)] = val
        if not exact:
            w = {k: float(v) for k, v in w.items()}
        if not w:
            raise ValidationError("empty measure")
        for k, v in w.items():
            if v < 0 or (self.full_support and v == 0):
                raise ValidationError(f"weight of node {k} must be positive, got {v}")
        if self.mode == "probability":
            tot = sum(w.values()) if exact else math.fsum(w.values())
            if abs(tot - 1) > (0 if exact else TOL):
                raise ValidationError(f"probability weights sum to {float(tot)!r}, not 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "exact", exact)

    @classmethod
    def from_json(cls, data, default_mode="probability"):
        if isinstance(data, (str, Path)) and Path(data).exists():
            data = json.loads(Path(data).read_text())
        elif isinstance(data, str):
            data = json.loads(data)
        if not isinstance(data, dict):
            raise ValidationError("measure JSON must be an object")
        data = dict(data)
        mode = data.pop("mode", default_mode)
        return cls(data, mode=mode)

    @classmethod
    def from_vector(cls, s: MatchingStructure, values, mode="probability", **kw):
        if len(values) != s.q:
            raise ValidationError(f"need {s.q} weights, got {len(values)}")
        return cls(dict(zip(s.nodes, values)), mode=mode, **kw)

    def to_json(self) -> dict:
        out = {k: (str(v) if self.exact else v) for k, v in self.weights.items()}
        out["mode"] = self.mode
        return out

    def __getitem__(self, v):
        return self.weights[str(v)]

    def check(self, s: MatchingStructure):
        if set(self.weights) != set(s.nodes):
            raise ValidationError(
                f"measure nodes {sorted(self.weights)} do not match structure nodes {list(s.nodes)}")

    def values(self, s: MatchingStructure) -> list:
        """Weights aligned with ``s.nodes`` (Fractions when exact)."""
        self.check(s)
        return [self.weights[v] for v in s.nodes]

    def vector(self, s: MatchingStructure) -> np.ndarray:
        return np.array([float(v) for v in self.values(s)])

    def total(self):
        return sum(self.weights.values())

    def normalized(self) -> "Measure":
        """The probability measure mu_lambda = lambda / lambda-bar."""
        tot = self.total()
        return Measure({k: v / tot for k, v in self.weights.items()}, "probability",
                       full_support=self.full_support)

    def scaled(self, c) -> "Measure":
        return Measure({k: v * c for k, v in self.weights.items()}, "intensity",
                       full_support=self.full_support)


def uniform(s: MatchingStructure, exact=True) -> Measure:
    w = Fraction(1, s.q) if exact else 1.0 / s.q
    return Measure({v: w for v in s.nodes})


@dataclass
class ConditionReport:
    """Verdict for one condition.

    ``status`` is ``"holds"``, ``"fails"`` or ``"boundary"``; ``margin`` is
    the smallest slack (negative when violated).
    """

    name: str
    holds: bool
    status: str
    margin: float
    witness: object = None
    note: str = ""

    def to_json(self) -> dict:
        w = self.witness
        if isinstance(w, (set, frozenset)):
            w = sorted(w)
        return {"condition": self.name, "holds": self.holds, "status": self.status,
                "margin": self.margin, "witness": w, "note": self.note}


def _verdict(name, margin, exact, strict=True, witness=None, note=""):
    """Turn a slack into a report. Strict conditions fail at equality."""
    if margin is None:  # vacuous: nothing to check
        return ConditionReport(name, True, "holds", math.inf, None, note or "vacuous")
    tol = 0 if exact else TOL
    if margin > tol:
        status = "holds"
    elif margin >= -tol:
        status = "boundary" if strict else "holds"
    else:
        status = "fails"
    holds = status == "holds"
    # the witness is the tightest set even when the condition holds
    return ConditionReport(name, holds, status, float(margin), witness, note)


def _msum(w, mask):
    out = 0
    k = 0
    while mask:
        if mask & 1:
            out += w[k]
        mask >>= 1
        k += 1
    return out


def _bits(mask):
    k = 0
    while mask:
        if mask & 1:
            yield k
        mask >>= 1
        k += 1


def _require_graphish(s, what):
    if s.kind == "hypergraph":
        raise UnsupportedKindError(f"{what} is defined for graphs and multigraphs only")


def in_ncond(g: MatchingStructure, m: Measure, name="Ncond") -> ConditionReport:
    """mu(I) < mu(E(I)) for every independent set I."""
    _require_graphish(g, "Ncond")
    w = m.values(g)
    best, arg = None, None
    for mk in independent_set_masks(g):
        slack = _msum(w, neighborhood_mask(g, mk)) - _msum(w, mk)
        if best is None or slack < best:
            best, arg = slack, mk
    return _verdict(name, best, m.exact,
                    witness=None if arg is None else g.sorted_nodes(g.subset(arg)))


def in_ncond_c(g: MatchingStructure, lam: Measure) -> ConditionReport:
    """Intensity version: lambda(I) < lambda(E(I)) for every independent set."""
    if lam.mode != "intensity":
        lam = Measure(lam.weights, "intensity")
    return in_ncond(g, lam, name="Ncond_C")


def _min_over(w, mask):
    return min(w[k] for k in _bits(mask))


def _is_mu_minimal(h, w, deg, imask) -> bool:
    for em in h.edge_masks.tolist():
        hit = em & imask
        if not hit:
            continue
        if hit & (hit - 1):
            return False
        k = hit.bit_length() - 1
        if deg[k] != 1:
            return False
        if any(w[j] <= w[k] for j in _bits(em & ~hit)):
            return False
    return True


def in_n1_family(h: MatchingStructure, m: Measure, variant: str = "N1") -> ConditionReport:
    """The three N1-type necessary conditions.

    variant ``"N1"``: non-mu-minimal independent sets, strict;
    ``"N1+"``: every independent set, minimum over the edge minus the set, strict;
    ``"N1++"``: every nonempty subset, weak inequality.
    """
    if variant not in ("N1", "N1+", "N1++"):
        raise ValidationError(f"unknown variant {variant!r}")
    w = m.values(h)
    em = h.edge_masks.tolist()
    deg = [sum(1 for e in em if e >> k & 1) for k in range(h.q)]
    edge_min = [_min_over(w, e) for e in em]
    if variant == "N1++":
        cands = _mask_order(range(1, 1 << h.q), h.q)
    else:
        cands = independent_set_masks(h)
    best, arg = None, None
    for mk in cands:
        if variant == "N1" and _is_mu_minimal(h, w, deg, mk):
            continue
        rhs = 0
        for e, emin in zip(em, edge_min):
            c = bin(e & mk).count("1")
            if c:
                rhs += c * (_min_over(w, e & ~mk) if variant == "N1+" else emin)
        slack = rhs - _msum(w, mk)
        if best is None or slack < best:
            best, arg = slack, mk
    return _verdict(variant, best, m.exact, strict=variant != "N1++",
                    witness=None if arg is None else h.sorted_nodes(h.subset(arg)))


def in_n2(h: MatchingStructure, m: Measure) -> ConditionReport:
    """mu(T) > 1/r for every transversal; minimum transversals suffice."""
    w = m.values(h)
    r, _ = rank_antirank(h)
    _, wits = transversal_number(h)
    # a lighter non-minimum transversal can exist, so scan all of them
    em = h.edge_masks
    best, arg = None, None
    for mk in range(1, 1 << h.q):
        if all(e & mk for e in em.tolist()):
            val = _msum(w, mk)
            if best is None or val < best:
                best, arg = val, mk
    one_r = Fraction(1, r) if m.exact else 1.0 / r
    return _verdict("N2", best - one_r, m.exact, witness=h.sorted_nodes(h.subset(arg)),
                    note=f"tau={len(wits[0])}")


def in_n3(h: MatchingStructure, m: Measure, strict: bool = True) -> ConditionReport:
    """mu(i) < 1/a (strict, N3-) or mu(i) <= 1/a (N3+)."""
    w = m.values(h)
    _, a = rank_antirank(h)
    one_a = Fraction(1, a) if m.exact else 1.0 / a
    k = max(range(h.q), key=lambda j: w[j])
    return _verdict("N3-" if strict else "N3+", one_a - w[k], m.exact, strict=strict,
                    witness=h.nodes[k])


def hall_threshold(q: int) -> Fraction:
    k = (q + 1) // 2
    return Fraction(k - 1, k)


def hall_report(h: MatchingStructure, m: Measure) -> ConditionReport:
    """Ratio bound mu_min/mu_max > threshold(q).

    When ``h`` violates Hall's condition and the bound holds, no policy
    stabilizes the model; ``witness`` carries the violating pair.
    """
    w = m.values(h)
    ratio = min(w) / max(w)
    thr = hall_threshold(h.q) if m.exact else float(hall_threshold(h.q))
    viol = hall_violation(h)
    rep = _verdict("Hall_ratio", ratio - thr, m.exact, witness=viol)
    rep.witness = None if viol is None else {"V1": viol[0], "V2": viol[1]}
    rep.note = "unstable for every policy" if (viol and rep.holds) else \
        ("Hall's condition holds" if viol is None else "ratio bound not met")
    return rep


def extend_measure(g: MatchingStructure, m: Measure, split=None) -> Measure:
    """Measure on the minimal blow-up: mu(i) splits into split*mu(i) on i and
    the rest on its copy. Default split is 1/2 everywhere."""
    _require_graphish(g, "extend_measure")
    m.check(g)
    split = {} if split is None else {str(k): v for k, v in split.items()}
    out = dict(m.weights)
    full = True
    for i in g.sorted_nodes(g.v1):
        t = split.get(i, Fraction(1, 2) if m.exact else 0.5)
        if isinstance(t, float) and m.exact:
            t = Fraction(repr(t))
        if not 0 <= t <= 1:
            raise ValidationError(f"split for node {i} must lie in [0, 1]")
        full &= 0 < t < 1
        out[i] = t * m.weights[i]
        out[copy_node(i)] = (1 - t) * m.weights[i]
    return Measure(out, m.mode, full_support=full and m.full_support)


def reduce_measure(g: MatchingStructure, mhat: Measure) -> Measure:
    """Inverse of :func:`extend_measure`: fold copies back onto originals."""
    out = {}
    for v in g.nodes:
        out[v] = mhat.weights[v] + (mhat.weights.get(copy_node(v), 0) if v in g.v1 else 0)
    return Measure(out, mhat.mode)


def find_ncond_measure(g: MatchingStructure):
    """Some measure in Ncond(g), or None when the set is empty.

    Maximizes the smallest slack t by linear programming over
    mu(E(I)) - mu(I) >= t, mu >= t, sum mu = 1.
    """
    from scipy.optimize import linprog
    _require_graphish(g, "find_ncond_measure")
    masks = independent_set_masks(g)
    q = g.q
    rows = []
    for mk in masks:
        nb = neighborhood_mask(g, mk)
        row = np.zeros(q + 1)
        for k in range(q):
            row[k] = (mk >> k & 1) - (nb >> k & 1)
        row[q] = 1.0
        rows.append(row)
    for k in range(q):
        row = np.zeros(q + 1)
        row[k], row[q] = -1.0, 1.0
        rows.append(row)
    c = np.zeros(q + 1)
    c[q] = -1.0
    a_eq = np.zeros((1, q + 1))
    a_eq[0, :q] = 1.0
    res = linprog(c, A_ub=np.array(rows), b_ub=np.zeros(len(rows)), A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, 1)] * q + [(None, 1)], method="highs")
    if res.status != 0:
        raise NumericError(f"linear program failed: {res.message}")
    if res.x[q] <= 1e-9:
        return None
    x = np.maximum(res.x[:q], 0)
    return Measure.from_vector(g, list(x / x.sum()))


# vectorized margins: rows of M are measures aligned with s.nodes

def independent_matrices(g: MatchingStructure):
    """Indicator matrices of independent sets and of their neighbourhoods."""
    masks = independent_set_masks(g)
    a = np.array([[mk >> k & 1 for k in range(g.q)] for mk in masks], dtype=float)
    b = np.array([[neighborhood_mask(g, mk) >> k & 1 for k in range(g.q)] for mk in masks],
                 dtype=float)
    return a.reshape(-1, g.q), b.reshape(-1, g.q)


def ncond_margins(g: MatchingStructure, M: np.ndarray) -> np.ndarray:
    """Smallest Ncond slack for each row; +inf when there is no independent set."""
    a, b = independent_matrices(g)
    if len(a) == 0:
        return np.full(len(M), np.inf)
    return (M @ (b - a).T).min(axis=1)


def _edge_mins(h, M):
    inc = h.incidence().astype(bool)
    return np.stack([M[:, row].min(axis=1) for row in inc], axis=1)


def n1pp_margins(h: MatchingStructure, M: np.ndarray) -> np.ndarray:
    masks = np.arange(1, 1 << h.q)
    ind = ((masks[:, None] >> np.arange(h.q)[None, :]) & 1).astype(float)
    counts = ind @ h.incidence().T.astype(float)
    return (_edge_mins(h, M) @ counts.T - M @ ind.T).min(axis=1)


def n1p_margins(h: MatchingStructure, M: np.ndarray) -> np.ndarray:
    inc = h.incidence().astype(bool)
    out = np.full(len(M), np.inf)
    for mk in independent_set_masks(h):
        ind = np.array([mk >> k & 1 for k in range(h.q)], dtype=bool)
        rhs = np.zeros(len(M))
        for row in inc:
            c = int((row & ind).sum())
            if c:
                rhs += c * M[:, row & ~ind].min(axis=1)
        out = np.minimum(out, rhs - M[:, ind].sum(axis=1))
    return out


def n1_margins(h: MatchingStructure, M: np.ndarray) -> np.ndarray:
    inc = h.incidence().astype(bool)
    deg = inc.sum(axis=0)
    mins = _edge_mins(h, M)
    out = np.full(len(M), np.inf)
    for mk in independent_set_masks(h):
        ind = np.array([mk >> k & 1 for k in range(h.q)], dtype=bool)
        minimal = np.ones(len(M), dtype=bool)
        rhs = np.zeros(len(M))
        for j, row in enumerate(inc):
            hit = row & ind
            c = int(hit.sum())
            if not c:
                continue
            rhs += c * mins[:, j]
            if c > 1:
                minimal[:] = False
                continue
            k = int(np.flatnonzero(hit)[0])
            if deg[k] != 1:
                minimal[:] = False
                continue
            others = row & ~hit
            minimal &= M[:, k] < M[:, others].min(axis=1)
        slack = rhs - M[:, ind].sum(axis=1)
        out = np.minimum(out, np.where(minimal, np.inf, slack))
    return out


def n2_margins(h: MatchingStructure, M: np.ndarray) -> np.ndarray:
    r, _ = rank_antirank(h)
    em = h.edge_masks
    masks = np.arange(1, 1 << h.q)
    ok = ((masks[:, None] & em[None, :]) != 0).all(axis=1)
    masks = masks[ok]
    ind = ((masks[:, None] >> np.arange(h.q)[None, :]) & 1).astype(float)
    return (M @ ind.T).min(axis=1) - 1.0 / r
