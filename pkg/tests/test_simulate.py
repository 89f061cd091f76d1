import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from matchkit.errors import ValidationError
from matchkit.measures import Measure, uniform
from matchkit.policies import PolicySpec, word_counts
from matchkit.simulate import (SimConfig, decode_word, encode_word, estimate_return_time,
                               kidney_compare, reference_run, run, sample_path)
from matchkit.structures import named

KIDNEY = Measure({"1": "0.25", "2": "0.27", "3": "0.25", "4": "0.23"})
CASES = [("complete_3uniform_4", "fcfm"), ("complete_3uniform_4", "ml"),
         ("complete_3uniform_4", "random"), ("square_loops", "fcfm"), ("string_loop3", "lcfm"),
         ("fano", "fcfm"), ("fano", "ms"), ("pendant_loop2", "ml"), ("bip4_loop1", "random"),
         ("cycle5", "lcfm")]


def rand_measure(s, seed):
    w = np.random.default_rng(seed).integers(1, 20, s.q)
    return Measure({v: F(int(x), int(w.sum())) for v, x in zip(s.nodes, w)})


def test_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(steps=0)
    with pytest.raises(ValidationError):
        SimConfig(steps=10, burn_in=10)
    with pytest.raises(ValidationError):
        SimConfig(steps=10, seed=-1)


@pytest.mark.parametrize("name,pol", CASES)
def test_kernel_matches_reference(name, pol):
    s = named(name)
    m = rand_measure(s, 7)
    r = run(s, pol, m, SimConfig(steps=3000, seed=11, record_path=True, threads=1, chunk=700))
    ref = reference_run(s, pol, m, 3000, seed=11)
    got = r.path[:r.trajectories[0].steps_done]
    assert len(got) == 3000
    for k in range(0, 3000, 37):
        assert (got[k] == word_counts(s, ref[k])).all(), k


def test_kernel_matches_reference_v2_favorable():
    s = named("bip4_loop1")
    p = PolicySpec.parse({"type": "v2_favorable", "inner": {"type": "ms"}})
    m = rand_measure(s, 3)
    r = run(s, p, m, SimConfig(steps=2000, seed=5, record_path=True, threads=1))
    ref = reference_run(s, p, m, 2000, seed=5, word_level=False)
    assert all((r.path[k] == ref[k]).all() for k in range(2000))


def test_thread_count_does_not_change_results():
    s = named("complete_3uniform_4")
    c1 = SimConfig(steps=20000, trajectories=6, seed=42, threads=1, record_empirical_up_to=3)
    c3 = SimConfig(steps=20000, trajectories=6, seed=42, threads=3, record_empirical_up_to=3)
    a, b = run(s, "ml", KIDNEY, c1), run(s, "ml", KIDNEY, c3)
    assert a.aggregate == b.aggregate
    assert a.empirical == b.empirical


def test_seed_changes_results():
    s = named("complete_3uniform_4")
    a = run(s, "fcfm", KIDNEY, SimConfig(steps=5000, seed=1))
    b = run(s, "fcfm", KIDNEY, SimConfig(steps=5000, seed=2))
    assert a.aggregate != b.aggregate


def test_statistics_ranges_and_periodicity():
    s = named("complete_3uniform_4")
    r = run(s, "fcfm", KIDNEY, SimConfig(steps=300000, trajectories=2, seed=3,
                                         record_empirical_up_to=4))
    a = r.aggregate
    assert 0 <= a["construction_point_fraction"] <= 1
    # 4 classes, 3 per match: the empty state is only visited at multiples of 3
    assert a["construction_point_fraction_mod3"] == pytest.approx(
        3 * a["construction_point_fraction"], rel=1e-3)
    assert sum(r.empirical.values()) <= 1 + 1e-12
    assert r.empirical[()] == pytest.approx(a["construction_point_fraction"], rel=1e-9)


def test_trajectorial_average_rough():
    s = named("complete_3uniform_4")
    a = run(s, "fcfm", KIDNEY, SimConfig(steps=200000, trajectories=10, seed=9)).aggregate
    assert abs(a["construction_point_fraction"] - 0.05137131) < 0.01


def test_scale_invariance_of_intensity_inputs():
    s = named("fano")
    lam = Measure({v: k + 1 for k, v in enumerate(s.nodes)}, "intensity")
    c = SimConfig(steps=20000, seed=4)
    a = run(s, "ml", lam, c).aggregate
    b = run(s, "ml", lam.scaled(3), c).aggregate
    assert a["construction_point_fraction"] == b["construction_point_fraction"]


def test_transient_measure_grows():
    s = named("complete_3uniform_4")
    m = Measure({"1": "0.35", "2": "0.25", "3": "0.2", "4": "0.2"})
    a = run(s, "ml", m, SimConfig(steps=100000, trajectories=5, seed=1)).aggregate
    assert a["drift_slope"] > 0.01


def test_return_times():
    h = named("complete_3uniform_4")
    mean, cnt = estimate_return_time(h, "ml", uniform(h), SimConfig(steps=100000, seed=2))
    assert math.isfinite(mean) and cnt > 100
    g = named("string")
    m = Measure({"1": "0.3", "2": "0.4", "3": "0.3"})
    r = run(g, "fcfm", m, SimConfig(steps=200000, seed=2, state_cap=2000))
    assert r.aggregate["diverged"] == 1
    sq = named("square_loops")
    mean, cnt = estimate_return_time(sq, "fcfm", uniform(sq), SimConfig(steps=20000, seed=2))
    assert mean < 10 and cnt > 2000


def test_kidney_pi0_rows():
    c = SimConfig(steps=3000, trajectories=2, seed=0)
    assert kidney_compare(KIDNEY, c)["pi0_two_by_two"] == pytest.approx(0.07098765, abs=5e-9)
    m2 = Measure({"1": "0.18", "2": "0.32", "3": "0.32", "4": "0.18"})
    assert kidney_compare(m2, c)["pi0_two_by_two"] == pytest.approx(0.2460938, abs=1e-7)
    row = kidney_compare(uniform(named("complete_3uniform_4")), c)
    assert row["pi0_two_by_two"] == 0.0
    bad = Measure({"1": "0.3", "2": "0.1", "3": "0.3", "4": "0.3"})
    assert math.isnan(kidney_compare(bad, c)["pi0_two_by_two"])
    with pytest.raises(ValidationError):
        kidney_compare(Measure({"1": "0.5", "2": "0.5"}), c)


def test_kidney_empty_buffers_read_on_multiple_of_three():
    row = kidney_compare(KIDNEY, SimConfig(steps=20000, trajectories=600, seed=4))
    assert row["av_eb_step"] == 19998
    # the chain is 3-periodic, so emptiness at a multiple of 3 is about 3x the average
    p = 3 * row["trajectorial_average"]
    assert abs(row["av_eb"] - p) < 4 * math.sqrt(p * (1 - p) / 600)


def test_sample_path_shape():
    s = named("pendant_loop2")
    lam = Measure({"1": 1, "2": 2, "3": 1, "4": 1}, "intensity")
    t, x = sample_path(s, "ml", lam, 500, seed=3, x0={"3": 4})
    assert t.shape == (501,) and x.shape == (501, 4)
    assert t[0] == 0 and (np.diff(t) > 0).all()
    assert list(x[0]) == [0, 0, 4, 0] and (x >= 0).all()
    with pytest.raises(ValidationError):
        sample_path(s, "ml", lam.normalized(), 10)


@settings(max_examples=40)
@given(st.lists(st.sampled_from(list("1234567")), max_size=6))
def test_word_encoding_round_trip(w):
    s = named("fano")
    assert decode_word(s, encode_word(s, w)) == tuple(w)
