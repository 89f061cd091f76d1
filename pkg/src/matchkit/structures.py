"""Matching structures: graphs, multigraphs and hypergraphs on one representation.

A structure is a tuple of node ids (strings) and a tuple of edges (frozensets).
A singleton edge ``{i}`` is a self-loop at ``i``. Enumerations work on bitmasks
where node ``nodes[k]`` is bit ``k``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import UnsupportedKindError, ValidationError

MAX_NODES = 16
COPY_SUFFIX = "_u"
_CHUNK = 4096


def _node_sort_key(v: str):
    # numeric ids sort numerically, the rest lexicographically after them
    return (0, int(v), "") if v.isdigit() else (1, 0, v)


@dataclass(frozen=True)
class MatchingStructure:
    """Node set plus edge family.

    Parameters
    ----------
    nodes : tuple of str
    edges : tuple of frozenset
        Each edge is a nonempty subset of ``nodes``.
    require_cover : bool
        Enforce that the union of edges is the node set. Only derived
        structures (the maximal subgraph) switch this off.
    """

    nodes: tuple
    edges: tuple
    require_cover: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        nodes = tuple(str(v) for v in self.nodes)
        edges = tuple(frozenset(str(v) for v in e) for e in self.edges)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        if len(nodes) == 0:
            raise ValidationError("structure has no nodes")
        if len(set(nodes)) != len(nodes):
            raise ValidationError("duplicate node identifiers")
        if len(nodes) > MAX_NODES:
            raise ValidationError(f"{len(nodes)} nodes exceeds the cap of {MAX_NODES}")
        known = set(nodes)
        seen = set()
        for e in edges:
            if not e:
                raise ValidationError("empty edge")
            bad = e - known
            if bad:
                raise ValidationError(f"edge {sorted(e)} uses unknown node(s) {sorted(bad)}")
            if e in seen:
                raise ValidationError(f"duplicate edge {sorted(e, key=_node_sort_key)}")
            seen.add(e)
        if self.require_cover:
            covered = set().union(*edges) if edges else set()
            if covered != known:
                missing = sorted(known - covered, key=_node_sort_key)
                raise ValidationError(f"nodes {missing} belong to no edge")
        if self.kind == "hypergraph":
            for a, b in itertools.permutations(edges, 2):
                if a < b:
                    raise ValidationError(
                        f"edge {sorted(a)} is contained in edge {sorted(b)} (not simple)")

    # construction helpers
    @classmethod
    def from_edges(cls, edges: Iterable[Iterable], nodes: Sequence | None = None):
        edges = [frozenset(str(v) for v in e) for e in edges]
        if nodes is None:
            nodes = sorted(set().union(*edges), key=_node_sort_key)
        return cls(tuple(nodes), tuple(edges))

    @classmethod
    def from_json(cls, data):
        """Parse ``{"nodes": [...], "edges": [[...], ...]}`` (dict, str or path)."""
        if isinstance(data, (str, Path)) and Path(data).exists():
            data = json.loads(Path(data).read_text())
        elif isinstance(data, str):
            data = json.loads(data)
        if not isinstance(data, dict) or "edges" not in data:
            raise ValidationError("structure JSON needs an 'edges' list")
        edges = data["edges"]
        if not isinstance(edges, list) or not all(isinstance(e, list) for e in edges):
            raise ValidationError("'edges' must be a list of lists")
        for e in edges:
            if len(set(map(str, e))) != len(e):
                raise ValidationError(f"edge {e} repeats a node")
        return cls.from_edges(edges, data.get("nodes"))

    def to_json(self) -> dict:
        return {"nodes": list(self.nodes),
                "edges": [sorted(e, key=self.index.__getitem__) for e in self.edges]}

    # derived quantities
    @cached_property
    def index(self) -> dict:
        return {v: k for k, v in enumerate(self.nodes)}

    @property
    def q(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def kind(self) -> str:
        sizes = {len(e) for e in self.edges}
        if sizes == {2}:
            return "graph"
        if sizes <= {1, 2}:
            return "multigraph"
        return "hypergraph"

    @cached_property
    def v1(self) -> frozenset:
        """Nodes carrying a self-loop."""
        return frozenset(next(iter(e)) for e in self.edges if len(e) == 1)

    @cached_property
    def v2(self) -> frozenset:
        return frozenset(self.nodes) - self.v1

    @cached_property
    def edge_masks(self) -> np.ndarray:
        return np.array([self.mask(e) for e in self.edges], dtype=np.int64)

    def mask(self, a: Iterable) -> int:
        out = 0
        for v in a:
            try:
                out |= 1 << self.index[str(v)]
            except KeyError:
                raise ValidationError(f"unknown node {v!r}") from None
        return out

    def subset(self, mask: int) -> frozenset:
        return frozenset(v for k, v in enumerate(self.nodes) if mask >> k & 1)

    def sorted_nodes(self, a: Iterable) -> list:
        return sorted((str(v) for v in a), key=self.index.__getitem__)

    def degree(self, v) -> int:
        return sum(1 for e in self.edges if str(v) in e)

    def edges_of(self, v) -> list:
        """Indices of edges containing ``v``, in edge order."""
        v = str(v)
        return [k for k, e in enumerate(self.edges) if v in e]

    def incidence(self) -> np.ndarray:
        """(m, q) 0/1 incidence matrix."""
        out = np.zeros((self.m, self.q), dtype=np.int64)
        for k, e in enumerate(self.edges):
            for v in e:
                out[k, self.index[v]] = 1
        return out

    def __str__(self):
        es = ["".join(self.sorted_nodes(e)) if all(len(v) == 1 for v in e)
              else "{" + ",".join(self.sorted_nodes(e)) + "}" for e in self.edges]
        return f"MatchingStructure({self.kind}, q={self.q}, edges=[{' '.join(es)}])"


def _check_nodes(s: MatchingStructure, a: Iterable) -> frozenset:
    a = frozenset(str(v) for v in a)
    bad = a - set(s.nodes)
    if bad:
        raise ValidationError(f"unknown node(s) {sorted(bad)}")
    return a


def _require_multigraph(s: MatchingStructure, what: str):
    if s.kind == "hypergraph":
        raise UnsupportedKindError(f"{what} is only defined for graphs and multigraphs")


def _popcount(arr: np.ndarray) -> np.ndarray:
    arr = arr.astype(np.uint64)
    out = np.zeros(arr.shape, dtype=np.int64)
    while np.any(arr):
        out += (arr & np.uint64(1)).astype(np.int64)
        arr = arr >> np.uint64(1)
    return out


def _mask_order(masks: Iterable[int], q: int) -> list:
    """Sort masks by cardinality, then lexicographically on node positions."""
    def key(mk):
        bits = tuple(k for k in range(q) if mk >> k & 1)
        return (len(bits), bits)
    return sorted(masks, key=key)


def _scan(s: MatchingStructure, test) -> list:
    """Masks 1..2^q-1 for which ``test(chunk, edge_masks)`` is true."""
    em = s.edge_masks
    hits = []
    total = 1 << s.q
    for lo in range(1, total, _CHUNK):
        chunk = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
        keep = test(chunk, em)
        hits.extend(int(c) for c in chunk[keep])
    return hits


def edges_meeting(s: MatchingStructure, a: Iterable) -> list:
    """Edges intersecting ``a``, in edge order."""
    a = _check_nodes(s, a)
    return [e for e in s.edges if e & a]


def neighborhood(s: MatchingStructure, u: Iterable) -> frozenset:
    """Neighbours of ``u`` in a graph or multigraph.

    A node of ``u`` is its own neighbour iff it carries a self-loop.
    """
    _require_multigraph(s, "neighborhood")
    u = _check_nodes(s, u)
    out = set()
    for e in s.edges:
        if len(e) == 1:
            if e <= u:
                out |= e
        elif e & u:
            out |= e - u if len(e & u) == 1 else e
    return frozenset(out)


def neighborhood_mask(s: MatchingStructure, mask: int) -> int:
    """Bitmask version of :func:`neighborhood`."""
    out = 0
    for em in s.edge_masks.tolist():
        hit = em & mask
        if not hit:
            continue
        if em == hit and bin(em).count("1") == 1:
            out |= em
        elif bin(hit).count("1") == 1:
            out |= em & ~mask
        else:
            out |= em
    return out


def independent_set_masks(s: MatchingStructure) -> list:
    def test(chunk, em):
        return ~((chunk[:, None] & em[None, :]) == em[None, :]).any(axis=1)
    return _mask_order(_scan(s, test), s.q)


def independent_sets(s: MatchingStructure) -> list:
    """Nonempty node sets containing no edge, by size then lexicographically.

    For multigraphs a self-looped node is itself an edge, so every result
    lies inside the loop-free part ``v2``.
    """
    return [s.subset(mk) for mk in independent_set_masks(s)]


def transversal_number(s: MatchingStructure):
    """Minimum transversal size and every transversal of that size.

    Returns
    -------
    tau : int
    witnesses : list of frozenset
    """
    def test(chunk, em):
        return ((chunk[:, None] & em[None, :]) != 0).all(axis=1)
    hits = np.array(_scan(s, test), dtype=np.int64)
    sizes = _popcount(hits)
    tau = int(sizes.min())
    best = _mask_order([int(h) for h in hits[sizes == tau]], s.q)
    return tau, [s.subset(mk) for mk in best]


def rank_antirank(s: MatchingStructure):
    sizes = [len(e) for e in s.edges]
    return max(sizes), min(sizes)


def is_uniform(s: MatchingStructure) -> bool:
    r, a = rank_antirank(s)
    return r == a


def is_connected(s: MatchingStructure) -> bool:
    """Connectivity of the line graph; uncovered nodes count as disconnected."""
    parent = list(range(s.q))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for e in s.edges:
        ks = [s.index[v] for v in e]
        for k in ks[1:]:
            parent[find(k)] = find(ks[0])
    return len({find(k) for k in range(s.q)}) == 1


def maximal_subgraph(g: MatchingStructure) -> MatchingStructure:
    """Delete every self-loop."""
    _require_multigraph(g, "maximal_subgraph")
    edges = tuple(e for e in g.edges if len(e) > 1)
    return MatchingStructure(g.nodes, edges, require_cover=False)


def copy_node(v: str) -> str:
    return f"{v}{COPY_SUFFIX}"


def minimal_blowup(g: MatchingStructure) -> MatchingStructure:
    """Duplicate each self-looped node ``i`` into ``i`` and ``i_u``.

    The copy is joined to every neighbour ``j`` of ``i`` in ``g``; the loop
    itself yields the edge ``(i_u, i)``.
    """
    _require_multigraph(g, "minimal_blowup")
    if not g.v1:
        return g
    loops = g.sorted_nodes(g.v1)
    nodes = g.nodes + tuple(copy_node(i) for i in loops)
    edges = [e for e in g.edges if len(e) > 1]
    for i in loops:
        for e in g.edges:
            if i in e:
                j = i if len(e) == 1 else next(iter(e - {i}))
                edges.append(frozenset({copy_node(i), j}))
    return MatchingStructure(nodes, tuple(edges))


def maximal_independent_sets(s: MatchingStructure) -> list:
    masks = independent_set_masks(s)
    out = [mk for mk in masks if not any(mk != o and mk & o == mk for o in masks)]
    return [s.subset(mk) for mk in out]


def complete_partite_partition(g: MatchingStructure):
    """Parts of a complete p-partite maximal subgraph, or None.

    The maximal independent sets must partition the nodes and every pair of
    nodes from distinct parts must be an edge.
    """
    h = maximal_subgraph(g)
    parts = maximal_independent_sets(h)
    seen = set()
    for p in parts:
        if p & seen:
            return None
        seen |= p
    if seen != set(h.nodes):
        return None
    edges = set(h.edges)
    for a, b in itertools.combinations(parts, 2):
        for i in a:
            for j in b:
                if frozenset({i, j}) not in edges:
                    return None
    return [h.sorted_nodes(p) for p in sorted(parts, key=lambda p: min(h.index[v] for v in p))]


# non-stabilizable classes

@dataclass(frozen=True)
class Finding:
    """One triggered non-stabilizability criterion with its witness."""

    criterion: str
    witness: dict

    def to_json(self) -> dict:
        return {"criterion": self.criterion, "witness": self.witness}


def _two_degree_one(h, deg):
    out = []
    for e in h.edges:
        ones = [v for v in h.sorted_nodes(e) if deg[v] == 1]
        if len(ones) >= 2:
            out.append(Finding("two_degree_one_nodes",
                               {"edge": h.sorted_nodes(e), "nodes": ones[:2]}))
    return out


def _degree_one_cover_ok(h, deg, b: frozenset) -> bool:
    meet = [e for e in h.edges if e & b]
    if not meet:
        return False
    outside = False
    for e in meet:
        ones = [v for v in e if deg[v] == 1]
        if not ones:
            return False
        outside |= any(v not in b for v in ones)
    return outside


def _degree_one_cover(h, deg):
    # edge intersections first (the natural witness), then every subset
    cands = []
    for a, b in itertools.combinations(h.edges, 2):
        if a & b:
            cands.append(a & b)
    cands += [h.subset(mk) for mk in _mask_order(range(1, 1 << h.q), h.q)]
    for b in cands:
        if _degree_one_cover_ok(h, deg, b):
            return [Finding("degree_one_cover", {"B": h.sorted_nodes(b)})]
    return []


def _uniform_bipartite(h):
    def test(chunk, em):
        return (_popcount(chunk[:, None] & em[None, :]) == 1).all(axis=1)
    hits = _mask_order(_scan(h, test), h.q)
    if not hits:
        return []
    v1 = h.subset(hits[0])
    return [Finding("uniform_bipartite",
                    {"V1": h.sorted_nodes(v1), "V2": h.sorted_nodes(set(h.nodes) - v1)})]


def r_partition(h: MatchingStructure):
    """Partition into r parts met exactly once by every edge, or None."""
    r, a = rank_antirank(h)
    if r != a or r < 2:
        return None
    colour = {}
    order = list(h.nodes)
    edges_by_node = {v: [e for e in h.edges if v in e] for v in order}

    def ok(v):
        for e in edges_by_node[v]:
            cs = [colour[u] for u in e if u in colour]
            if len(cs) != len(set(cs)):
                return False
        return True

    def rec(k, used):
        if k == len(order):
            return True
        v = order[k]
        for c in range(min(used + 1, r)):
            colour[v] = c
            if ok(v) and rec(k + 1, max(used, c + 1)):
                return True
            del colour[v]
        return False

    if not rec(0, 0):
        return None
    parts = [[v for v in order if colour[v] == c] for c in range(r)]
    if any(not p for p in parts):
        return None
    return parts


def cycle_ordering(h: MatchingStructure, ell: int):
    """Cyclic node ordering making ``h`` an r-uniform ``ell``-cycle, or None."""
    r, a = rank_antirank(h)
    if r != a or not 0 < ell < r:
        return None
    q, step = h.q, r - ell
    if q % step or h.m != q // step or q < r:
        return None
    edges = set(h.edges)
    first = h.sorted_nodes(h.edges[0])
    for start in itertools.permutations(first):
        seq = list(start)
        rest = [v for v in h.nodes if v not in start]

        def rec(seq, rest):
            p = len(seq) - 1
            if p >= r - 1 and (p - (r - 1)) % step == 0:
                if frozenset(seq[p - r + 1:p + 1]) not in edges:
                    return None
            if not rest:
                wins = {frozenset(seq[(k + t) % q] for t in range(r)) for k in range(0, q, step)}
                if wins != edges or len(wins) != q // step:
                    return None
                # consecutive windows (cyclically) meet in exactly ell nodes
                ws = [frozenset(seq[(k + t) % q] for t in range(r)) for k in range(0, q, step)]
                if any(len(ws[k] & ws[(k + 1) % len(ws)]) != ell for k in range(len(ws))):
                    return None
                return list(seq)
            for v in rest:
                got = rec(seq + [v], [u for u in rest if u != v])
                if got:
                    return got
            return None

        got = rec(seq, rest)
        if got:
            return got
    return None


def classify_nonstabilizable(h: MatchingStructure) -> list:
    """Criteria proving that no admissible policy stabilizes ``h``.

    An empty list means none of the criteria applies; it is not a proof of
    stabilizability.
    """
    if not is_connected(h):
        raise ValidationError("classification needs a connected structure")
    deg = {v: h.degree(v) for v in h.nodes}
    out = _two_degree_one(h, deg)
    r, a = rank_antirank(h)
    if r == a:
        tau, wit = transversal_number(h)
        if tau == 1:
            out.append(Finding("uniform_star", {"center": [next(iter(w)) for w in wit]}))
    out += _degree_one_cover(h, deg)
    if r == a and r >= 2:
        out += _uniform_bipartite(h)
        parts = r_partition(h)
        if parts is not None:
            out.append(Finding("r_partite", {"parts": parts}))
        if h.q % r == 0:
            for ell in range(1, r):
                seq = cycle_ordering(h, ell)
                if seq is not None:
                    out.append(Finding("uniform_cycle", {"ell": ell, "ordering": seq}))
                    break
    return out


def hall_violation(h: MatchingStructure, max_nodes: int = 12):
    """Disjoint (V1, V2) with |H & V2| >= |H & V1| for all H and |V2| < |V1|.

    Search is exhaustive over 4^q mask pairs, so it is capped at ``max_nodes``.
    Returns the first pair by (|V1|, V1, |V2|, V2) order, or None.
    """
    if h.q > max_nodes:
        raise ValidationError(f"Hall search is capped at {max_nodes} nodes")
    em = h.edge_masks
    allm = np.arange(1 << h.q, dtype=np.int64)
    inter = _popcount(allm[:, None] & em[None, :])
    sizes = _popcount(allm)
    for v1 in _mask_order(range(1, 1 << h.q), h.q):
        k1 = bin(v1).count("1")
        cand = (allm & v1) == 0
        cand &= sizes < k1
        cand &= (inter >= inter[v1][None, :]).all(axis=1)
        if cand.any():
            v2 = _mask_order(allm[cand].tolist(), h.q)[0]
            return h.sorted_nodes(h.subset(v1)), h.sorted_nodes(h.subset(v2))
    return None


# catalogue of named structures used throughout the docs and tests

def complete_uniform(q: int, r: int) -> MatchingStructure:
    nodes = [str(k) for k in range(1, q + 1)]
    return MatchingStructure.from_edges(itertools.combinations(nodes, r), nodes)


def cycle_graph(q: int) -> MatchingStructure:
    nodes = [str(k) for k in range(1, q + 1)]
    return MatchingStructure.from_edges(
        [(nodes[k], nodes[(k + 1) % q]) for k in range(q)], nodes)


def _e(spec: str):
    return [list(tok) for tok in spec.split()]


FANO = "124 156 137 235 457 436 627"

CATALOG = {
    "complete_3uniform_4": lambda: complete_uniform(4, 3),
    "complete_3uniform_5": lambda: complete_uniform(5, 3),
    "square_loops": lambda: MatchingStructure.from_edges(_e("1 2 3 4 12 23 34 14")),
    "cycle4": lambda: cycle_graph(4),
    "cycle5": lambda: cycle_graph(5),
    "triangle": lambda: cycle_graph(3),
    "pendant": lambda: MatchingStructure.from_edges(_e("12 23 24 34")),
    "pendant_loop2": lambda: MatchingStructure.from_edges(_e("12 2 23 24 34")),
    "pendant_loop3": lambda: MatchingStructure.from_edges(_e("12 23 24 3 34")),
    "string": lambda: MatchingStructure.from_edges(_e("12 23")),
    "string_loop3": lambda: MatchingStructure.from_edges(_e("12 23 3")),
    "bip3_loop2": lambda: MatchingStructure.from_edges(_e("12 23 2")),
    "bip4_loop1": lambda: MatchingStructure.from_edges(_e("1 12 14 23 34")),
    "three_partite_4": lambda: MatchingStructure.from_edges(_e("12 13 23 24 34")),
    "fano": lambda: MatchingStructure.from_edges(_e(FANO)),
    "fano_minus_457": lambda: MatchingStructure.from_edges(
        [e for e in _e(FANO) if set(e) != set("457")]),
    "hall_4uniform": lambda: MatchingStructure.from_edges(_e("1245 1345 2345")),
    "two_hyperedges": lambda: MatchingStructure.from_edges(_e("123 234")),
}


def named(name: str) -> MatchingStructure:
    """Return a catalogue structure by name."""
    try:
        return CATALOG[name]()
    except KeyError:
        raise ValidationError(
            f"unknown structure {name!r}; known: {', '.join(sorted(CATALOG))}") from None


def load_structure(arg: str) -> MatchingStructure:
    """Catalogue name, JSON file path or inline JSON."""
    if arg in CATALOG:
        return named(arg)
    return MatchingStructure.from_json(arg)
