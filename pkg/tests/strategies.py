"""Hypothesis strategies for small structures and measures."""
import itertools
from fractions import Fraction

from hypothesis import strategies as st

from matchkit.errors import ValidationError
from matchkit.measures import Measure
from matchkit.structures import MatchingStructure, is_connected


@st.composite
def multigraphs(draw, min_nodes=2, max_nodes=6, connected=True):
    q = draw(st.integers(min_nodes, max_nodes))
    nodes = [str(k) for k in range(1, q + 1)]
    pairs = list(itertools.combinations(nodes, 2))
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True))
    loops = draw(st.lists(st.sampled_from(nodes), unique=True))
    edges = [frozenset(p) for p in chosen] + [frozenset({v}) for v in loops]
    covered = set().union(*edges)
    for v in nodes:
        if v not in covered:
            edges.append(frozenset({v, nodes[0] if v != nodes[0] else nodes[1]}))
    s = MatchingStructure(tuple(nodes), tuple(dict.fromkeys(edges)))
    if connected and not is_connected(s):
        # chain the components together
        extra = [frozenset({nodes[k], nodes[k + 1]}) for k in range(q - 1)]
        s = MatchingStructure(tuple(nodes), tuple(dict.fromkeys(list(s.edges) + extra)))
    return s


@st.composite
def hypergraphs(draw, min_nodes=3, max_nodes=7):
    q = draw(st.integers(min_nodes, max_nodes))
    nodes = [str(k) for k in range(1, q + 1)]
    cands = [frozenset(c) for r in (2, 3) for c in itertools.combinations(nodes, r)]
    picked = draw(st.lists(st.sampled_from(cands), min_size=1, max_size=10, unique=True))
    edges = []
    for e in picked:
        if not any(e <= f or f <= e for f in edges):
            edges.append(e)
    covered = set().union(*edges)
    rest = [v for v in nodes if v not in covered]
    for v in rest:
        e = frozenset({v}) | {sorted(covered, key=int)[0]}
        if not any(e <= f or f <= e for f in edges):
            edges.append(e)
    try:
        return MatchingStructure(tuple(nodes), tuple(edges))
    except ValidationError:
        return MatchingStructure.from_edges([("1", "2", "3")])


def measures_for(s, exact=True, mode="probability", denom=40):
    """Positive rational (or float) weights summing to one."""
    return st.lists(st.integers(1, denom), min_size=s.q, max_size=s.q).map(
        lambda ws: Measure({v: (Fraction(w, sum(ws)) if exact else w / sum(ws))
                            for v, w in zip(s.nodes, ws)}, mode))
