import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from matchkit.errors import ValidationError
from matchkit.measures import Measure, uniform
from matchkit.oracle import (
    adaptive_stationary, build_chain, choice_distribution, connected_graphs,
    connected_multigraphs, exhaustive_condition_check, measure_grid, project_words,
    random_hypergraphs, total_variation, truncated_stationary)
from matchkit.policies import compile_policy, PolicySpec
from matchkit.product_form import fcfm_graph_example_table, fcfm_table
from matchkit.structures import named

SQ = named("square_loops")
STR = named("string_loop3")
TP = named("three_partite_4")
STR_M = Measure({"1": "0.2", "2": "0.45", "3": "0.35"})


def floats(d, maxlen=None):
    return {k: float(v) for k, v in d.items() if maxlen is None or len(k) <= maxlen}


def test_finite_model_is_exact():
    m = Measure({"1": "0.1", "2": "0.2", "3": "0.3", "4": "0.4"})
    t = truncated_stationary(SQ, "fcfm", m, 4)
    assert t.extra["sink_mass"] == 0 and t.extra["states"] == 9
    ref = floats(fcfm_graph_example_table("square_loops", m).entries)
    assert set(t.entries) == set(ref)
    assert total_variation(t.entries, ref) < 1e-12


def test_rows_are_stochastic():
    states, P = build_chain(STR, "fcfm", STR_M, 6)
    assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)
    states, P = build_chain(TP, "ml", uniform(TP), 5)
    assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)


def test_sink_mass_decreases_with_cap():
    sinks = [truncated_stationary(STR, "fcfm", STR_M, c).extra["sink_mass"]
             for c in (4, 8, 16, 32)]
    assert all(a > b for a, b in zip(sinks, sinks[1:]))


def test_string_product_form_agreement():
    t = adaptive_stationary(STR, "fcfm", STR_M)
    ref = floats(fcfm_table(STR, STR_M, 8).entries)
    tv = total_variation(floats(t.entries, 8), ref)
    assert tv < 1e-6 + t.extra["sink_mass"]


def test_three_partite_pi0_from_class_chain():
    m = Measure({"1": "0.25", "2": "0.27", "3": "0.25", "4": "0.23"})
    t = adaptive_stationary(TP, "ml", m)
    assert t.entries[(0, 0, 0, 0)] == pytest.approx(0.0709876, abs=1e-5)


def test_projection_consistency():
    t = adaptive_stationary(STR, "fcfm", STR_M, target=1e-10)
    oracle_counts = project_words(t.entries, STR)
    table_counts = project_words(fcfm_table(STR, STR_M, 40).entries, STR)
    for x, p in table_counts.items():
        if sum(x) <= 6:
            assert oracle_counts[x] == pytest.approx(p, abs=1e-8)


def test_cap_too_small():
    with pytest.raises(ValidationError):
        truncated_stationary(STR, "fcfm", STR_M, 1)


@settings(max_examples=40)
@given(name=st.sampled_from(["fano", "complete_3uniform_4", "bip4_loop1", "cycle5"]),
       pol=st.sampled_from(["ml", "ms", "random"]), seed=st.integers(0, 10 ** 6))
def test_choice_distribution_sums_to_one(name, pol, seed):
    s = named(name)
    cp = compile_policy(s, PolicySpec.parse(pol))
    x = np.random.default_rng(seed).integers(0, 3, s.q)
    for k in range(s.q):
        ch = choice_distribution(s, cp, x, k)
        if ch:
            assert sum(c for c, _ in ch) == pytest.approx(1.0)


def test_measure_grid():
    g = measure_grid(3)
    assert len(g) == 171 and np.allclose(g.sum(axis=1), 1) and (g > 0).all()
    with pytest.raises(ValidationError):
        from fractions import Fraction
        measure_grid(3, Fraction(3, 7))


def test_inclusion_checks_pass():
    small = list(connected_multigraphs(4))
    assert exhaustive_condition_check(small, ("ncond_check", "ncond")) is None
    hyp = list(random_hypergraphs(25, 5, seed=1))
    assert exhaustive_condition_check(hyp, ("n1", "n1p")) is None
    assert exhaustive_condition_check(hyp, ("n1", "n1pp")) is None


def test_inverted_inclusion_is_caught():
    small = list(connected_multigraphs(4))
    bad = exhaustive_condition_check(small, ("ncond", "ncond_check"))
    assert bad is not None
    s, mu = bad
    assert mu.sum() == pytest.approx(1.0)


def test_graph_family_sizes():
    # connected graphs up to isomorphism: 1, 2, 6, 21, 112 on 2..6 nodes
    counts = {}
    for g in connected_graphs(6):
        counts[g.q] = counts.get(g.q, 0) + 1
    assert counts == {2: 1, 3: 2, 4: 6, 5: 21, 6: 112}
