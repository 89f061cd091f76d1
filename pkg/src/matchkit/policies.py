"""Matching policies acting on words (queue details) and on class counts.

A word is a tuple of node ids, oldest item first. A class detail is an
integer vector aligned with ``s.nodes``. Random decisions read one float
from ``rng.random()``; any object with that method works, e.g. a numpy
``Generator`` or :class:`DrawStream` over pre-drawn values.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .measures import Measure
from .structures import MatchingStructure

FCFM, LCFM, PRIORITY, RANDOM, MAX_WEIGHT = range(5)
_CODES = {"fcfm": FCFM, "lcfm": LCFM, "priority": PRIORITY, "random": RANDOM,
          "max_weight": MAX_WEIGHT}
_ALIASES = {"ml": ("max_weight", 1.0), "match_longest": ("max_weight", 1.0),
            "ms": ("max_weight", -1.0), "match_shortest": ("max_weight", -1.0)}


@dataclass(frozen=True)
class PolicySpec:
    """Policy description independent of any structure.

    ``orders`` maps node id to a list of edges (edge indices or node lists)
    in decreasing priority. ``rewards`` maps an edge key such as ``"1,2,3"``
    to its reward; missing edges get zero.
    """

    kind: str
    beta: float = 0.0
    rewards: dict = field(default_factory=dict)
    orders: dict = field(default_factory=dict)
    inner: "PolicySpec | None" = None

    def __post_init__(self):
        if self.kind == "v2_favorable":
            if self.inner is None or self.inner.kind == "v2_favorable":
                raise ValidationError("v2_favorable needs a non-nested inner policy")
        elif self.kind not in _CODES:
            raise ValidationError(f"unknown policy {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "max_weight" and not self.rewards and self.beta in (1.0, -1.0):
            return "ml" if self.beta > 0 else "ms"
        if self.kind == "v2_favorable":
            return f"v2_favorable({self.inner.name})"
        return self.kind

    @property
    def class_admissible(self) -> bool:
        base = self.inner if self.kind == "v2_favorable" else self
        return base.kind not in ("fcfm", "lcfm")

    @classmethod
    def parse(cls, data) -> "PolicySpec":
        """From a name (``"fcfm"``, ``"ml"``...), a JSON string/file or a dict."""
        if isinstance(data, str):
            if data in _CODES or data in _ALIASES:
                data = {"type": data}
            elif Path(data).exists():
                data = json.loads(Path(data).read_text())
            else:
                try:
                    data = json.loads(data)
                except json.JSONDecodeError:
                    raise ValidationError(f"unknown policy {data!r}") from None
        if not isinstance(data, dict) or "type" not in data:
            raise ValidationError("policy JSON needs a 'type'")
        kind = data["type"]
        if kind in _ALIASES:
            kind, beta = _ALIASES[kind]
            return cls(kind, beta=beta)
        if kind == "v2_favorable":
            return cls(kind, inner=cls.parse(data.get("inner", "ml")))
        return cls(kind, beta=float(data.get("beta", 0.0)),
                   rewards=dict(data.get("rewards", {})),
                   orders={str(k): list(v) for k, v in data.get("orders", {}).items()})

    def to_json(self) -> dict:
        out = {"type": self.kind}
        if self.kind == "max_weight":
            out["beta"] = self.beta
            out["rewards"] = self.rewards
        if self.kind == "priority":
            out["orders"] = self.orders
        if self.inner is not None:
            out["inner"] = self.inner.to_json()
        return out


def fcfm():
    return PolicySpec("fcfm")


def lcfm():
    return PolicySpec("lcfm")


def random_policy():
    return PolicySpec("random")


def match_longest():
    return PolicySpec("max_weight", beta=1.0)


def match_shortest():
    return PolicySpec("max_weight", beta=-1.0)


def max_weight(beta, rewards=None):
    return PolicySpec("max_weight", beta=float(beta), rewards=dict(rewards or {}))


def priority(orders):
    return PolicySpec("priority", orders={str(k): list(v) for k, v in orders.items()})


def v2_favorable(inner):
    return PolicySpec("v2_favorable", inner=inner)


@dataclass(frozen=True)
class CompiledPolicy:
    """A policy bound to a structure, in the array form the kernel uses."""

    code: int
    v2fav: bool
    beta: float
    rewards: np.ndarray    # (m,)
    prio: np.ndarray       # (q, m) edge indices per node, -1 padded
    spec: PolicySpec


def _edge_index(s: MatchingStructure, e) -> int:
    if isinstance(e, (int, np.integer)) and not isinstance(e, bool):
        if not 0 <= e < s.m:
            raise ValidationError(f"edge index {e} out of range")
        return int(e)
    nodes = e.split(",") if isinstance(e, str) else e
    key = frozenset(str(v).strip() for v in nodes)
    try:
        return s.edges.index(key)
    except ValueError:
        raise ValidationError(f"{sorted(key)} is not an edge") from None


def compile_policy(s: MatchingStructure, p: PolicySpec) -> CompiledPolicy:
    v2fav = p.kind == "v2_favorable"
    base = p.inner if v2fav else p
    if v2fav and s.kind == "hypergraph":
        raise ValidationError("v2_favorable needs a graph or multigraph")
    rewards = np.zeros(s.m)
    for k, val in base.rewards.items():
        rewards[_edge_index(s, k)] = float(val)
    prio = np.full((s.q, s.m), -1, dtype=np.int64)
    for k, v in enumerate(s.nodes):
        own = s.edges_of(v)
        if base.kind == "priority":
            if v not in base.orders:
                raise ValidationError(f"priority order missing for node {v}")
            order = [_edge_index(s, e) for e in base.orders[v]]
            if sorted(order) != own:
                raise ValidationError(
                    f"priority order of node {v} must list exactly its edges {own}")
        else:
            order = own
        prio[k, :len(order)] = order
    return CompiledPolicy(_CODES[base.kind], v2fav, float(base.beta), rewards, prio, p)


class DrawStream:
    """Serve pre-drawn uniforms through the ``random()`` interface."""

    def __init__(self, draws):
        self._draws = iter(draws)
        self.used = 0

    def random(self):
        self.used += 1
        return float(next(self._draws))


def uniform_index(u: float, n: int) -> int:
    return min(int(u * n), n - 1)


def embed_intensity(lam: Measure) -> Measure:
    """Probability measure of the embedded discrete chain."""
    return lam.normalized()


def _as_counts(s, x):
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (s.q,):
        raise ValidationError(f"class detail must have length {s.q}")
    return x


def feasible_matches(s: MatchingStructure, x, v) -> list:
    """Edges containing ``v`` whose other classes all have waiting items.

    A self-loop ``{v}`` needs one waiting item of class ``v``.
    """
    x = _as_counts(s, x)
    try:
        k = s.index[str(v)]
    except KeyError:
        raise ValidationError(f"unknown node {v!r}") from None
    return [s.edges[j] for j in _feasible_idx(s, x, k)]


def _feasible_idx(s, x, k):
    out = []
    v = s.nodes[k]
    for j, e in enumerate(s.edges):
        if v not in e:
            continue
        if len(e) == 1:
            if x[k] >= 1:
                out.append(j)
        elif all(x[s.index[u]] > 0 for u in e if u != v):
            out.append(j)
    return out


def _partners(s, j, k):
    e = s.edges[j]
    return [k] if len(e) == 1 else sorted(s.index[u] for u in e if u != s.nodes[k])


def _v2_filter(s, cands, k):
    v1 = {s.index[u] for u in s.v1}
    good = [j for j in cands if not any(i in v1 for i in _partners(s, j, k))]
    return good or cands


def _choose_class(s, cp: CompiledPolicy, x, k, cands, rng):
    """Pick among feasible edge indices using class-level information only."""
    if cp.v2fav:
        cands = _v2_filter(s, cands, k)
    if len(cands) == 1:
        return cands[0]
    if cp.code == PRIORITY:
        for j in cp.prio[k]:
            if j in cands:
                return int(j)
    if cp.code == RANDOM:
        return cands[uniform_index(rng.random(), len(cands))]
    if cp.code == MAX_WEIGHT:
        inc = s.incidence()
        scores = [cp.beta * float(inc[j] @ x) + cp.rewards[j] for j in cands]
        top = max(scores)
        best = [j for j, sc in zip(cands, scores) if sc == top]
        if len(best) == 1:
            return best[0]
        return best[uniform_index(rng.random(), len(best))]
    raise ValidationError("fcfm and lcfm need the word state")


def step_class(s: MatchingStructure, x, v, p, rng=None):
    """One arrival of class ``v`` on class counts ``x``.

    Returns ``(x_new, edge_index_or_None)``.
    """
    cp = p if isinstance(p, CompiledPolicy) else compile_policy(s, p)
    if cp.code in (FCFM, LCFM):
        raise ValidationError(f"{cp.spec.name} needs the word state; use step_word")
    x = _as_counts(s, x).copy()
    k = s.index[str(v)]
    cands = _feasible_idx(s, x, k)
    if not cands:
        x[k] += 1
        return x, None
    j = _choose_class(s, cp, x, k, cands, rng)
    for i in _partners(s, j, k):
        x[i] -= 1
    return x, j


def word_counts(s: MatchingStructure, w) -> np.ndarray:
    """Commutative image of a word."""
    x = np.zeros(s.q, dtype=np.int64)
    for a in w:
        x[s.index[str(a)]] += 1
    return x


def step_word(s: MatchingStructure, w, v, p, rng=None):
    """One arrival of class ``v`` on the word ``w`` (oldest first).

    Returns ``(w_new, edge_index_or_None)``.
    """
    cp = p if isinstance(p, CompiledPolicy) else compile_policy(s, p)
    w = tuple(str(a) for a in w)
    v = str(v)
    k = s.index[v]
    x = word_counts(s, w)
    cands = _feasible_idx(s, x, k)
    if not cands:
        return w + (v,), None
    if cp.v2fav:
        cands = _v2_filter(s, cands, k)
    pos = {}
    for t, a in enumerate(w):
        pos.setdefault(s.index[a], []).append(t)
    if cp.code == FCFM:
        j = min(cands, key=lambda j: (sorted(pos[i][0] for i in _partners(s, j, k)), j))
        take = {pos[i][0] for i in _partners(s, j, k)}
    elif cp.code == LCFM:
        j = min(cands, key=lambda j: (
            [-t for t in sorted((pos[i][-1] for i in _partners(s, j, k)), reverse=True)], j))
        take = {pos[i][-1] for i in _partners(s, j, k)}
    else:
        j = _choose_class(s, cp, x, k, cands, rng)
        take = {pos[i][0] for i in _partners(s, j, k)}
    return tuple(a for t, a in enumerate(w) if t not in take), j


def is_admissible_counts(s: MatchingStructure, x) -> bool:
    x = _as_counts(s, x)
    if (x < 0).any():
        return False
    # a loop class may hold one item; any other edge must miss a class
    for e in s.edges:
        if len(e) > 1 and all(x[s.index[u]] > 0 for u in e):
            return False
    return all(x[s.index[i]] <= 1 for i in s.v1)


def is_admissible_word(s: MatchingStructure, w) -> bool:
    return is_admissible_counts(s, word_counts(s, w))
