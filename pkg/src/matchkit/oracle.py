"""Brute-force validators.

``truncated_stationary`` builds the transition matrix of the matching chain
on every state with at most ``cap`` items and solves for its stationary law.
Transitions that would leave the truncation go to a sink state that jumps
back to the empty state; the sink's stationary mass bounds the truncation
error. ``exhaustive_condition_check`` drives the condition-inclusion
property checks over families of small structures and a rational grid of
measures.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericError, ValidationError
from .measures import (TOL, Measure, n1_margins, n1p_margins, n1pp_margins, ncond_margins)
from .policies import (FCFM, LCFM, MAX_WEIGHT, PRIORITY, RANDOM, CompiledPolicy, PolicySpec,
                       _feasible_idx, _partners, _v2_filter, compile_policy, step_word)
from .product_form import StationaryTable
from .structures import MatchingStructure, maximal_subgraph, minimal_blowup

DIRECT_LIMIT = 50_000
RESIDUAL_MAX = 1e-10


def choice_distribution(s: MatchingStructure, cp: CompiledPolicy, x, k: int) -> list:
    """``[(probability, edge index)]`` for an arrival of class index ``k``.

    Empty when nothing is feasible. Random choices are spread uniformly as
    the policy's single uniform draw would spread them.
    """
    cands = _feasible_idx(s, x, k)
    if not cands:
        return []
    if cp.v2fav:
        cands = _v2_filter(s, cands, k)
    if len(cands) == 1:
        return [(1.0, cands[0])]
    if cp.code == PRIORITY:
        for j in cp.prio[k]:
            if j in cands:
                return [(1.0, int(j))]
    if cp.code == RANDOM:
        return [(1.0 / len(cands), j) for j in cands]
    if cp.code == MAX_WEIGHT:
        inc = s.incidence()
        scores = [cp.beta * float(inc[j] @ x) + cp.rewards[j] for j in cands]
        top = max(scores)
        best = [j for j, sc in zip(cands, scores) if sc == top]
        return [(1.0 / len(best), j) for j in best]
    raise ValidationError("word-level policy passed to class-level enumeration")


def _class_successors(s, cp, x, p):
    out = []
    for k in range(s.q):
        choices = choice_distribution(s, cp, np.array(x), k)
        if not choices:
            y = list(x)
            y[k] += 1
            out.append((p[k], tuple(y)))
            continue
        for pr, j in choices:
            y = list(x)
            for i in _partners(s, j, k):
                y[i] -= 1
            out.append((p[k] * pr, tuple(y)))
    return out


def _word_successors(s, cp, w, p):
    out = []
    for k, v in enumerate(s.nodes):
        w2, _ = step_word(s, w, v, cp)
        out.append((p[k], w2))
    return out


def build_chain(s: MatchingStructure, p, m: Measure, cap: int):
    """Enumerate states reachable from empty with at most ``cap`` items.

    Returns ``(states, P)`` where ``P`` is a CSR matrix whose last row and
    column are the sink.
    """
    if cap < 2:
        raise ValidationError("cap must be at least 2")
    spec = PolicySpec.parse(p) if not isinstance(p, (PolicySpec, CompiledPolicy)) else p
    cp = spec if isinstance(spec, CompiledPolicy) else compile_policy(s, spec)
    mm = m.normalized() if m.mode == "intensity" else m
    probs = mm.vector(s)
    word_level = cp.code in (FCFM, LCFM)
    start = () if word_level else (0,) * s.q
    size = len if word_level else sum
    succ = _word_successors if word_level else _class_successors
    index = {start: 0}
    states = [start]
    rows, cols, vals = [], [], []
    sink_in = []
    head = 0
    while head < len(states):
        st = states[head]
        for pr, nxt in succ(s, cp, st, probs):
            if pr == 0:
                continue
            if size(nxt) > cap:
                sink_in.append((head, pr))
                continue
            j = index.get(nxt)
            if j is None:
                j = index[nxt] = len(states)
                states.append(nxt)
            rows.append(head)
            cols.append(j)
            vals.append(pr)
        head += 1
    n = len(states)
    for i, pr in sink_in:
        rows.append(i)
        cols.append(n)
        vals.append(pr)
    rows.append(n)
    cols.append(0)
    vals.append(1.0)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))
    P.sum_duplicates()
    return states, P


def _solve(P):
    n = P.shape[0]
    if n <= DIRECT_LIMIT:
        A = (P.T - sp.identity(n, format="csr")).tolil()
        A[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[n - 1] = 1.0
        pi = spla.spsolve(A.tocsc(), b)
        if not np.all(np.isfinite(pi)):
            raise NumericError("singular truncated system")
    else:
        # lazy power iteration keeps aperiodicity
        pi = np.full(n, 1.0 / n)
        PT = P.T.tocsr()
        for _ in range(200_000):
            nxt = 0.5 * (pi + PT @ pi)
            if np.abs(nxt - pi).sum() < 1e-14:
                pi = nxt
                break
            pi = nxt
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    res = float(np.abs(P.T @ pi - pi).sum())
    if res > RESIDUAL_MAX:
        raise NumericError(f"stationary residual {res:.3e} exceeds {RESIDUAL_MAX:g}")
    return pi, res


def truncated_stationary(s: MatchingStructure, p, m: Measure, cap: int) -> StationaryTable:
    """Stationary law of the chain truncated at ``cap`` items.

    Entries are renormalized over retained states; ``extra['sink_mass']`` is
    the stationary mass of the sink, ``truncated_mass`` mirrors it.
    """
    states, P = build_chain(s, p, m, cap)
    pi, res = _solve(P)
    sink = float(pi[-1])
    keep = pi[:-1] / (1.0 - sink)
    # breadth-first order: states appear by distance from the empty state
    entries = {st: float(v) for st, v in zip(states, keep)}
    # the sink is left after one step, so its mass is an exit rate; the mass
    # sitting on the cap is a better hint of the truncation error
    size = len if states[0] == () else sum
    edge = math.fsum(v for st, v in entries.items() if size(st) == cap)
    return StationaryTable(entries, entries[states[0]], sink, cap,
                           "truncated linear solve",
                           {"sink_mass": sink, "boundary_mass": edge, "residual": res,
                            "states": len(states)})


def adaptive_stationary(s, p, m, cap=8, target=1e-9, max_cap=400):
    """Double the cap until both sink and boundary mass drop below ``target``."""
    while True:
        t = truncated_stationary(s, p, m, cap)
        if max(t.extra["sink_mass"], t.extra["boundary_mass"]) < target or cap >= max_cap:
            return t
        cap = min(max_cap, cap * 2)


def total_variation(a: dict, b: dict) -> float:
    keys = set(a) | set(b)
    return 0.5 * math.fsum(abs(float(a.get(k, 0.0)) - float(b.get(k, 0.0))) for k in keys)


def project_words(table: dict, s: MatchingStructure) -> dict:
    """Commutative image: word probabilities summed by class counts."""
    out = {}
    for w, pr in table.items():
        x = [0] * s.q
        for a in w:
            x[s.index[a]] += 1
        out[tuple(x)] = out.get(tuple(x), 0.0) + float(pr)
    return out


# exhaustive condition checks

def measure_grid(q: int, step: Fraction = Fraction(1, 20)) -> np.ndarray:
    """All measures with positive weights on the grid ``step``."""
    n = int(1 / step)
    if n * step != 1:
        raise ValidationError("grid step must divide 1")
    rows = []
    for cuts in itertools.combinations(range(1, n), q - 1):
        parts = np.diff((0,) + cuts + (n,))
        rows.append(parts)
    return np.array(rows, dtype=float).reshape(-1, q) * float(step)


def _blowup_rows(g, M):
    gh = minimal_blowup(g)
    out = np.empty((len(M), gh.q))
    for k, v in enumerate(gh.nodes):
        if v in g.index:
            col = M[:, g.index[v]]
            out[:, k] = col / 2 if v in g.v1 else col
        else:
            out[:, k] = M[:, g.index[v[:-len("_u")]]] / 2
    return gh, out


def _holds(margins, strict=True):
    return margins > 1e-9 if strict else margins >= -1e-9


CONDITIONS = {
    "ncond": lambda s, M: _holds(ncond_margins(s, M)),
    "ncond_check": lambda s, M: _holds(ncond_margins(maximal_subgraph(s), M)),
    "ncond_hat": lambda s, M: _holds(ncond_margins(*_blowup_rows(s, M))),
    "n1": lambda s, M: _holds(n1_margins(s, M)),
    "n1p": lambda s, M: _holds(n1p_margins(s, M)),
    "n1pp": lambda s, M: _holds(n1pp_margins(s, M), strict=False),
}


def exhaustive_condition_check(family, prop, step: Fraction = Fraction(1, 20)):
    """Check a property on every structure of ``family`` and every grid measure.

    ``prop`` is either a pair ``(a, b)`` of condition names meaning
    "a implies b", a triple ``(a, b, "iff")``, or a callable
    ``(s, M) -> bool array``. Returns ``None`` on success, else the first
    counterexample as ``(structure, measure row)``.
    """
    grids = {}
    for s in family:
        if s.q not in grids:
            grids[s.q] = measure_grid(s.q, step)
        M = grids[s.q]
        if callable(prop):
            ok = prop(s, M)
        else:
            a = CONDITIONS[prop[0]](s, M)
            b = CONDITIONS[prop[1]](s, M)
            ok = (a == b) if len(prop) > 2 and prop[2] == "iff" else (~a | b)
        bad = np.flatnonzero(~np.asarray(ok))
        if len(bad):
            return s, M[bad[0]]
    return None


def connected_graphs(max_nodes: int = 6, min_nodes: int = 2):
    """Connected simple graphs up to isomorphism, nodes labelled 1..n."""
    import networkx as nx
    for G in nx.graph_atlas_g():
        n = G.number_of_nodes()
        if n < min_nodes or n > max_nodes or G.number_of_edges() == 0:
            continue
        if not nx.is_connected(G):
            continue
        nodes = [str(k + 1) for k in range(n)]
        yield MatchingStructure.from_edges([(nodes[a], nodes[b]) for a, b in G.edges()], nodes)


def connected_multigraphs(max_nodes: int = 6, min_nodes: int = 2, only_looped=False):
    """Every connected graph above with every subset of self-loops."""
    for g in connected_graphs(max_nodes, min_nodes):
        for r in range(0 if not only_looped else 1, g.q + 1):
            for loops in itertools.combinations(g.nodes, r):
                yield MatchingStructure(g.nodes, g.edges + tuple(frozenset({v}) for v in loops))


def random_hypergraphs(count: int, max_nodes: int = 6, seed: int = 0):
    """Seeded random connected simple hypergraphs with edges of size 2 or 3."""
    rng = np.random.default_rng(seed)
    made = 0
    while made < count:
        q = int(rng.integers(3, max_nodes + 1))
        nodes = [str(k + 1) for k in range(q)]
        m = int(rng.integers(2, 2 * q))
        edges = []
        for _ in range(m):
            size = int(rng.choice([2, 3])) if q >= 3 else 2
            e = frozenset(rng.choice(nodes, size=size, replace=False).tolist())
            if any(e <= f or f <= e for f in edges):
                continue
            edges.append(e)
        try:
            s = MatchingStructure(tuple(nodes), tuple(edges))
        except ValidationError:
            continue
        from .structures import is_connected
        if is_connected(s):
            made += 1
            yield s
