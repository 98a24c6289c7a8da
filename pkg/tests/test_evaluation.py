import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import GOLDEN
from patrolsynth.evaluation import (DegenerateLevel, NonProductStrategy, VisitProfile, WindowTooLarge,
                                    best_response_level, brute_force_window_damage, level, markov_level,
                                    product_window_damage, relative_deviation, schedule_profile, simulate,
                                    visit_profile, window_damages)
from patrolsynth.model import validate
from patrolsynth.synthesis import (Assignment, BasicSet, SetAssignment, basic_set_visit_schedule, compose,
                                   naive_strategy, set_damage, synthesize)


def _single_set_strategy(q, D, E, p, cost=1):
    """A strategy with one basic set pinned to ``E`` expected patrollers."""
    bs = BasicSet(D, cost, q, 1)
    a = Assignment(sets=(SetAssignment(bs, E),), common_protection=0.0, alpha_max=float(cost),
                   detection_prob=p, k=max(1, round(E)))
    return compose([bs], a)


def test_profile_example1(example1):
    strategy = synthesize(example1, 1)
    prof = visit_profile(strategy, 0)
    np.testing.assert_allclose(prof.probs[0], [GOLDEN, 0.0], atol=1e-12)
    np.testing.assert_allclose(prof.probs[1], [0.0, GOLDEN], atol=1e-12)


def test_profile_deterministic_set():
    np.testing.assert_allclose(schedule_profile(3, 3, 3.0), np.ones((3, 3)))


def test_profile_tail_phase():
    probs = schedule_profile(3, 5, 2.0)
    np.testing.assert_allclose(probs[:, 3:], 2 / 3)


@given(st.integers(1, 6), st.data())
def test_profile_marginalizes_schedules(q, data):
    D = data.draw(st.integers(q, 12))
    E = data.draw(st.floats(0.0, q))
    K = int(np.floor(E))
    lam = E - K
    probs = schedule_profile(q, D, E)
    for ell in range(D):
        expected = (1 - lam) * basic_set_visit_schedule(q, D, min(K, q), ell)
        if lam > 0:
            expected = expected + lam * basic_set_visit_schedule(q, D, K + 1, ell)
        np.testing.assert_allclose(probs[:, ell], expected, atol=1e-12)


def test_example1_level(example1):
    report = best_response_level(synthesize(example1, 1), example1)
    assert report.level == pytest.approx(GOLDEN, abs=1e-9)
    assert report.upper_bound == pytest.approx(2 / 3, abs=1e-9)
    assert report.relative_deviation == pytest.approx((2 / 3 - GOLDEN) / GOLDEN, abs=1e-9)
    assert report.relative_deviation == pytest.approx(0.0786893, abs=1e-6)


def test_example2_level(example2):
    report = best_response_level(synthesize(example2, 2), example2)
    assert report.level == pytest.approx(5.0, abs=1e-9)
    assert report.relative_deviation == pytest.approx(0.0, abs=1e-9)


def test_naive_example1(example1):
    sigma = naive_strategy(example1, 1)
    assert level(sigma, example1) == pytest.approx(5 / 9, abs=1e-12)


def test_alternating_variant_example1():
    # from the last visited vertex move to one of the other two uniformly
    states = [frozenset({0}), frozenset({1}), frozenset({2})]
    P = [[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]]
    assert markov_level(states, P, [1 / 3] * 3, [1, 1, 1], [2, 2, 2], 1.0) == pytest.approx(0.5, abs=1e-15)


def test_markov_level_matches_uniform_naive():
    states = [frozenset({0}), frozenset({1}), frozenset({2})]
    P = [[1 / 3] * 3] * 3
    assert markov_level(states, P, [1 / 3] * 3, [1, 1, 1], [2, 2, 2], 1.0) == pytest.approx(5 / 9)


def test_window_damages_match_direct_product():
    rng = np.random.default_rng(3)
    probs = rng.random((4, 7))
    probs[1, 2] = 1.0
    prof = VisitProfile(7, 9.0, np.arange(4), probs)
    for p in (0.3, 1.0):
        fast = window_damages(prof, p)
        for i in range(4):
            for j in range(7):
                assert fast[i, j] == pytest.approx(product_window_damage(prof, p, i, j), rel=1e-12, abs=1e-300)


def test_brute_force_example1_remainder(example1):
    strategy = synthesize(example1, 1)
    for phase in range(2):
        assert brute_force_window_damage(strategy, 1, 0, phase) == pytest.approx(GOLDEN ** 2, abs=1e-12)
        assert brute_force_window_damage(strategy, 1, 0, phase) == pytest.approx(1 - GOLDEN, abs=1e-12)


def test_brute_force_deterministic_set():
    strategy = _single_set_strategy(2, 4, 2.0, 0.4, cost=5)
    # every vertex gets a visit in each of the 4 rounds
    assert brute_force_window_damage(strategy, 0, 1, 0) == pytest.approx(5 * 0.6 ** 4, abs=1e-12)


@pytest.mark.parametrize("p", [0.3, 0.7, 1.0])
def test_brute_force_matches_set_expression(p):
    strategy = _single_set_strategy(3, 5, 1.5, p, cost=4)
    worst = max(brute_force_window_damage(strategy, 0, v, j) for v in range(3) for j in range(5))
    assert worst == pytest.approx(set_damage(1.5, 3, 5, 4.0, p), abs=1e-12)


def test_brute_force_window_too_large():
    strategy = _single_set_strategy(5, 5, 1.0, 0.5)
    with pytest.raises(WindowTooLarge):
        brute_force_window_damage(strategy, 0, 0, 0)


def test_relative_deviation():
    assert relative_deviation(3.0, 3.0) == 0.0
    with pytest.raises(DegenerateLevel):
        relative_deviation(0.0, 1.0)


def test_non_product_strategy_rejected(example1):
    class Positional:
        k = 1

    with pytest.raises(NonProductStrategy):
        best_response_level(Positional(), example1)


def test_simulate_example2(example2):
    strategy = synthesize(example2, 2)
    res = simulate(strategy, (0, 0, 0), example2, trials=200_000, seed=11)
    assert res.exact == pytest.approx(1.0, abs=1e-12)
    assert abs(res.mean - res.exact) <= 3 * res.stderr


def test_simulate_no_attack(example2):
    res = simulate(synthesize(example2, 2), None, example2, trials=10)
    assert res.mean == 0.0 and res.stderr == 0.0


def test_simulate_full_coverage_is_zero():
    gs = validate([(2, 2, 6), (2, 2, 3), (2, 2, 2)], 1.0)
    strategy = synthesize(gs, 6)
    res = simulate(strategy, (0, 1, 1), gs, trials=1000, seed=0)
    assert res.mean == 0.0 and res.exact == 0.0


def test_simulate_naive(example1):
    sigma = naive_strategy(example1, 1)
    res = simulate(sigma, (0, 0, 0), example1, trials=100_000, seed=5)
    assert res.exact == pytest.approx(4 / 9)
    assert abs(res.mean - res.exact) <= 3 * res.stderr


def test_simulate_is_deterministic(example2):
    strategy = synthesize(example2, 2)
    a = simulate(strategy, (1, 0, 1), example2, trials=5000, seed=9, chunk_cells=1000)
    b = simulate(strategy, (1, 0, 1), example2, trials=5000, seed=9, chunk_cells=1000, workers=3)
    assert a == b


def test_parallel_evaluation_is_identical(surveillance):
    strategy = synthesize(surveillance, 6000)
    assert best_response_level(strategy, surveillance, workers=4) == best_response_level(strategy, surveillance)


structures = st.lists(st.tuples(st.integers(1, 20), st.integers(1, 6), st.integers(1, 25)), min_size=1, max_size=3)


@settings(max_examples=50, deadline=None)
@given(structures, st.sampled_from([0.3, 0.7, 1.0]), st.data())
def test_evaluator_matches_assignment(groups, p, data):
    gs = validate(groups, p)
    k = data.draw(st.integers(1, gs.n_vertices))
    strategy = synthesize(gs, k)
    report = best_response_level(strategy, gs)
    a = strategy.assignment
    tol = 1e-6 * gs.alpha_max
    if a.saturated:
        assert report.level >= a.common_protection - tol
    else:
        assert report.level == pytest.approx(a.common_protection, abs=tol)
    assert report.level <= report.upper_bound + tol


@settings(max_examples=40, deadline=None)
@given(structures, st.sampled_from([0.3, 0.7, 1.0]), st.data())
def test_level_monotone_in_patrollers(groups, p, data):
    gs = validate(groups, p)
    if gs.n_vertices < 2:
        return
    k = data.draw(st.integers(1, gs.n_vertices - 1))
    lo = best_response_level(synthesize(gs, k), gs).level
    hi = best_response_level(synthesize(gs, k + 1), gs).level
    assert hi >= lo - 1e-9 * gs.alpha_max
