from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from matchkit.errors import UnsupportedKindError, ValidationError
from matchkit.lyapunov import incomplete_3uniform
from matchkit.measures import (
    Measure, extend_measure, find_ncond_measure, hall_report, hall_threshold, in_n1_family,
    in_n2, in_n3, in_ncond, in_ncond_c, reduce_measure, uniform)
from matchkit.structures import (
    MatchingStructure, complete_uniform, cycle_graph, hall_violation, maximal_subgraph,
    minimal_blowup, named)

from strategies import hypergraphs, measures_for, multigraphs


def vec(s, *ws, mode="probability"):
    return Measure.from_vector(s, [str(w) if isinstance(w, F) else w for w in ws], mode=mode)


def is_bipartite_graph(g):
    import networkx as nx
    if g.kind != "graph":
        return False
    return nx.is_bipartite(nx.Graph([tuple(e) for e in g.edges]))


# Measure type

def test_probability_mode_rejects_bad_sums_and_zeros():
    with pytest.raises(ValidationError):
        Measure({"1": 0.5, "2": 0.4})
    with pytest.raises(ValidationError):
        Measure({"1": 1, "2": 0})
    with pytest.raises(ValidationError):
        Measure({"1": 1, "2": -1}, "intensity")
    with pytest.raises(ValidationError):
        Measure({"1": float("nan"), "2": 1.0}, "intensity")


def test_exact_parsing_and_json_round_trip():
    m = Measure({"1": "1/3", "2": "2/3"})
    assert m.exact and m["1"] == F(1, 3)
    assert Measure.from_json(m.to_json()) == m
    f = Measure({"1": 0.25, "2": 0.75})
    assert not f.exact and Measure.from_json(f.to_json()).weights == f.weights


def test_measure_must_match_nodes():
    with pytest.raises(ValidationError):
        in_ncond(named("triangle"), Measure({"1": "1/2", "2": "1/2"}))


# Ncond

def test_ncond_three_partite_holds():
    g = named("three_partite_4")
    r = in_ncond(g, vec(g, F(25, 100), F(27, 100), F(25, 100), F(23, 100)))
    assert r.holds and r.status == "holds"
    assert r.margin == pytest.approx(0.04)


def test_ncond_three_partite_fails_with_witness():
    g = named("three_partite_4")
    r = in_ncond(g, vec(g, F(3, 10), F(2, 10), F(2, 10), F(3, 10)))
    assert not r.holds and r.status == "fails"
    assert set(r.witness) == {"1", "4"}
    assert r.margin == pytest.approx(-0.2)


@pytest.mark.parametrize("name", ["cycle4", "string"])
@settings(max_examples=30)
@given(data=st.data())
def test_ncond_bipartite_always_fails(name, data):
    g = named(name)
    assert not in_ncond(g, data.draw(measures_for(g))).holds


def test_ncond_rejects_hypergraphs():
    with pytest.raises(UnsupportedKindError):
        in_ncond(named("fano"), uniform(named("fano")))


def test_ncond_float_boundary():
    # path 1-2-3 with a loop at 2: {1,3} ties with its neighbourhood
    g = MatchingStructure.from_edges([["1", "2"], ["2", "3"], ["2"]])
    r = in_ncond(g, vec(g, 0.25, 0.5, 0.25))
    assert r.status == "boundary" and not r.holds
    assert in_ncond(g, vec(g, F(1, 4), F(1, 2), F(1, 4))).status == "boundary"


def test_ncond_c_pendant_loop2_witness_measure():
    g = named("pendant_loop2")
    assert in_ncond_c(g, vec(g, 0.2, 0.4, 0.2, 0.2, mode="intensity")).holds


def test_ncond_c_uniform_on_bipartite_fails():
    g = named("cycle4")
    assert not in_ncond_c(g, vec(g, 1, 1, 1, 1, mode="intensity")).holds


@settings(max_examples=100)
@given(g=multigraphs(), data=st.data())
def test_ncond_c_equals_ncond_of_normalized(g, data):
    ws = data.draw(st.lists(st.integers(1, 30), min_size=g.q, max_size=g.q))
    lam = vec(g, *ws, mode="intensity")
    a, b = in_ncond_c(g, lam), in_ncond(g, lam.normalized())
    assert (a.holds, a.status) == (b.holds, b.status)


@given(g=multigraphs(), data=st.data(), c=st.fractions(F(1, 10), 10))
def test_scale_invariance(g, data, c):
    ws = data.draw(st.lists(st.integers(1, 30), min_size=g.q, max_size=g.q))
    lam = vec(g, *ws, mode="intensity")
    assert in_ncond_c(g, lam).status == in_ncond_c(g, lam.scaled(c)).status
    assert in_n2(g, lam.normalized()).status == in_n2(g, lam.scaled(c).normalized()).status


@settings(max_examples=80)
@given(g=multigraphs(max_nodes=6), data=st.data())
def test_maximal_subgraph_inclusion(g, data):
    m = data.draw(measures_for(g))
    if in_ncond(maximal_subgraph(g), m).holds:
        assert in_ncond(g, m).holds


@settings(max_examples=60)
@given(g=multigraphs(max_nodes=6))
def test_nonempty_iff_not_bipartite(g):
    found = find_ncond_measure(g)
    if is_bipartite_graph(g):
        assert found is None
    else:
        assert found is not None and in_ncond(g, found).holds


# N1 family

def test_n1plus_two_degree_one_nodes_always_fails():
    h = MatchingStructure.from_edges([["1", "2", "3"], ["3", "4", "5"]])
    for ws in [(1, 1, 1, 1, 1), (5, 1, 2, 3, 4), (1, 9, 3, 2, 2)]:
        r = in_n1_family(h, vec(h, *[F(w, sum(ws)) for w in ws]), "N1+")
        assert not r.holds


def test_n1_holds_where_ncond_fails_on_five_cycle():
    g = cycle_graph(5)
    e = F(1, 100)
    m = vec(g, F(1, 2) - 3 * e / 4, F(1, 4) - e / 8, 4 * e / 5, e / 5, F(1, 4) - e / 8)
    assert in_n1_family(g, m, "N1").holds
    assert not in_ncond(g, m).holds


def test_n1_unknown_variant():
    g = named("triangle")
    with pytest.raises(ValidationError):
        in_n1_family(g, uniform(g), "N4")


@settings(max_examples=60)
@given(g=multigraphs(max_nodes=6), data=st.data())
def test_ncond_inside_n1pp(g, data):
    m = data.draw(measures_for(g))
    if in_ncond(g, m).holds:
        assert in_n1_family(g, m, "N1++").holds


@settings(max_examples=60)
@given(h=hypergraphs(max_nodes=6), data=st.data())
def test_n1_inside_n1plus_and_n1pp(h, data):
    m = data.draw(measures_for(h))
    if in_n1_family(h, m, "N1").holds:
        assert in_n1_family(h, m, "N1+").holds
        assert in_n1_family(h, m, "N1++").holds


# N2, N3, Hall

def test_n2_complete_uniform_holds():
    h = complete_uniform(4, 3)
    r = in_n2(h, uniform(h))
    assert r.holds and r.margin == pytest.approx(0.5 - 1 / 3)


def test_n2_small_transversal_fails():
    h = named("two_hyperedges")
    r = in_n2(h, uniform(h))
    assert not r.holds and len(r.witness) == 1


def test_n2_incomplete_order5():
    h = incomplete_3uniform(5, [(1, 2, 3)])
    r = in_n2(h, uniform(h))
    assert r.holds and F(r.margin).limit_denominator(100) == F(2, 5) - F(1, 3)


def test_n3_examples():
    h = complete_uniform(4, 3)
    assert in_n3(h, vec(h, F(25, 100), F(27, 100), F(25, 100), F(23, 100))).holds
    r = in_n3(h, vec(h, F(35, 100), F(25, 100), F(20, 100), F(20, 100)))
    assert not r.holds and r.witness == "1"
    g = named("string")
    m = vec(g, F(1, 4), F(1, 2), F(1, 4))
    assert in_n3(g, m, strict=False).holds
    assert in_n3(g, m, strict=True).status == "boundary"


def test_hall_examples():
    v1, v2 = hall_violation(named("hall_4uniform"))
    assert set(v1) == {"1", "2", "3"} and set(v2) == {"4", "5"}
    assert hall_violation(complete_uniform(4, 3)) is None
    assert hall_threshold(7) == F(3, 4)
    h = named("hall_4uniform")
    assert hall_report(h, uniform(h)).note == "unstable for every policy"


# extended measures

def test_half_split():
    g = named("pendant_loop3")
    m = vec(g, F(2, 10), F(3, 10), F(3, 10), F(2, 10))
    mh = extend_measure(g, m)
    assert mh["3"] == mh["3_u"] == F(3, 20)
    assert mh["1"] == F(2, 10)


def test_full_split_round_trip():
    g = named("square_loops")
    m = vec(g, F(1, 10), F(2, 10), F(3, 10), F(4, 10))
    mh = extend_measure(g, m, split={v: 1 for v in g.nodes})
    assert not mh.full_support
    assert reduce_measure(g, mh) == m
    with pytest.raises(ValidationError):
        extend_measure(g, m, split={"1": 2})


@settings(max_examples=80)
@given(g=multigraphs(max_nodes=5), data=st.data())
def test_blowup_equivalence(g, data):
    m = data.draw(measures_for(g))
    mh = extend_measure(g, m)
    small, big = in_ncond(g, m), in_ncond(minimal_blowup(g), mh)
    if big.holds:
        assert small.holds
    if small.holds and not big.holds:
        # only a set of copies alone can sit at equality (see the next test)
        assert big.status == "boundary"
        assert all(v.endswith("_u") for v in big.witness)
    assert reduce_measure(g, mh) == m


def test_blowup_copies_only_counterexample():
    g = MatchingStructure.from_edges([["1", "2"], ["1"], ["2"]])
    m = vec(g, F(1, 2), F(1, 2))
    assert in_ncond(g, m).holds  # vacuous, no independent set
    big = in_ncond(minimal_blowup(g), extend_measure(g, m))
    assert big.status == "boundary" and set(big.witness) == {"1_u", "2_u"}
