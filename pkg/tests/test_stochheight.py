import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategies import small_maps

from stochdyn.dynsys import (
    WordCapExceeded,
    eval_map,
    make_map,
    make_system,
    stochastic_degree,
    words,
)
from stochdyn.exactnum import INFINITY, ProjPointQ
from stochdyn.heights import l1_height_control_total, weil_height
from stochdyn.stochheight import (
    IntegerOverflowBudget,
    scaling_residual,
    stoch_height,
    stoch_height_exact,
    stoch_height_mc,
    system_tail_bound,
    weil_comparison_residual,
)

LOG2 = math.log(2)

ONE = ProjPointQ(1, 1)
TWO = ProjPointQ(2, 1)
ZERO = ProjPointQ(0, 1)


def mixed_system():
    return make_system(
        [make_map([0, 0, 2], [1]), make_map([0, 0, 0, 1], [1])],
        [Fraction(1, 3), Fraction(2, 3)],
    )


def test_exact_alpha_one_closed_form(dyadic):
    for n in range(1, 13):
        est = stoch_height_exact(dyadic, ONE, n)
        want = (1 - 0.5**n) * LOG2 / 2
        assert est.value == pytest.approx(want, rel=1e-12)
        assert est.stderr == 0.0
        assert est.mode == "exact"


def test_exact_alpha_two_closed_form(dyadic):
    for n in range(1, 13):
        est = stoch_height_exact(dyadic, TWO, n)
        want = (1.5 - 0.5 ** (n + 1)) * LOG2
        assert est.value == pytest.approx(want, rel=1e-12)


def test_exact_fixed_points(dyadic):
    assert stoch_height_exact(dyadic, ZERO, 6).value == 0.0
    assert stoch_height_exact(dyadic, INFINITY, 6).value == 0.0


def test_exact_matches_word_enumeration(dyadic):
    # independent oracle: direct enumeration over words
    for system, alpha in ((dyadic, ONE), (mixed_system(), ONE), (mixed_system(), TWO)):
        n = 4
        brute = 0.0
        for w in words(system, n):
            pt = alpha
            for i in w.indices:
                pt = eval_map(system.maps[i], pt)
            brute += float(w.weight) * weil_height(pt) / w.degree
        est = stoch_height_exact(system, alpha, n)
        assert est.value == pytest.approx(brute, rel=1e-12)


def test_exact_word_cap(dyadic):
    with pytest.raises(WordCapExceeded):
        stoch_height_exact(dyadic, ONE, 10, word_cap=100)


def test_bit_budget_guard(dyadic):
    with pytest.raises(IntegerOverflowBudget):
        stoch_height_exact(dyadic, TWO, 9, bit_budget=100)


def test_tail_bound_formula(dyadic):
    # integrated bound (log 2)/2 and rate 2 give tail (log 2) / 2^n
    for n in range(1, 8):
        assert system_tail_bound(dyadic, n) == pytest.approx(LOG2 * 0.5**n)


def test_mc_single_map_zero_variance(single_z2):
    est = stoch_height_mc(single_z2, TWO, 5, 64, seed=1)
    assert est.value == pytest.approx(LOG2, abs=1e-14)
    assert est.stderr == 0.0


def test_mc_within_four_stderr_of_exact(dyadic):
    exact = stoch_height_exact(dyadic, ONE, 12).value
    mc = stoch_height_mc(dyadic, ONE, 12, 10**4, seed=0)
    assert abs(mc.value - exact) <= 4 * mc.stderr


def test_mc_deterministic(dyadic):
    a = stoch_height_mc(dyadic, ONE, 8, 500, seed=7)
    b = stoch_height_mc(dyadic, ONE, 8, 500, seed=7)
    assert (a.value, a.stderr) == (b.value, b.stderr)
    c = stoch_height_mc(dyadic, ONE, 8, 500, seed=8)
    assert a.value != c.value


def test_mc_consistency_rate(dyadic):
    exact = stoch_height_exact(dyadic, ONE, 5).value
    misses = 0
    for seed in range(40):
        mc = stoch_height_mc(dyadic, ONE, 5, 300, seed=seed)
        if abs(mc.value - exact) > 4 * mc.stderr:
            misses += 1
    assert misses <= 1


def test_stoch_height_dyadic_one(dyadic):
    est = stoch_height(dyadic, ONE, 1e-3)
    assert est.mode == "exact"
    assert est.tail_bound <= 1e-3
    assert abs(est.value - LOG2 / 2) <= 1e-3


def test_stoch_height_single_map_is_weil(single_z2):
    est = stoch_height(single_z2, ProjPointQ(3, 2), 0.1)
    assert est.depth == 1
    assert est.tail_bound == 0.0
    assert est.value == pytest.approx(math.log(3), abs=1e-12)


def test_stoch_height_dyadic_two(dyadic):
    est = stoch_height(dyadic, TWO, 1e-3)
    assert abs(est.value - 1.5 * LOG2) <= 1e-3


def test_stoch_height_mc_fallback(dyadic):
    est = stoch_height(dyadic, ONE, 1e-3, word_cap=100, seed=3)
    assert est.mode == "mc"
    assert est.tail_bound <= 1e-3
    assert abs(est.value - LOG2 / 2) <= 1e-3 + 4 * est.stderr


def test_scaling_residual(dyadic, single_z2):
    assert scaling_residual(dyadic, ONE, 1e-3) <= 2e-3
    assert scaling_residual(single_z2, ProjPointQ(3, 2), 1e-6) <= 2e-6
    assert scaling_residual(dyadic, ZERO, 1e-3) == 0.0


def test_weil_comparison_dyadic(dyadic):
    diff, budget = weil_comparison_residual(dyadic, ONE)
    assert budget == pytest.approx(3 * LOG2)
    assert diff == pytest.approx(LOG2 / 2, abs=2e-3)
    assert diff <= budget
    diff2, _ = weil_comparison_residual(dyadic, TWO)
    assert diff2 == pytest.approx(1.5 * LOG2 - LOG2, abs=2e-3)


def test_weil_comparison_trivial(single_z2):
    diff, budget = weil_comparison_residual(single_z2, ProjPointQ(5, 3))
    assert budget == 0.0
    assert diff <= 1e-12


def test_monotone_refinement(dyadic):
    for system in (dyadic, mixed_system()):
        c = l1_height_control_total(system).total
        delta = float(stochastic_degree(system))
        for alpha in (ONE, TWO, ProjPointQ(1, 2)):
            prev = stoch_height_exact(system, alpha, 1).value
            for n in range(2, 6):
                cur = stoch_height_exact(system, alpha, n).value
                assert abs(cur - prev) <= c * delta ** (2 - n) + 1e-12
                prev = cur


@settings(max_examples=25, deadline=None)
@given(small_maps(), small_maps(), st.integers(1, 3))
def test_exact_nonnegative(phi1, phi2, n):
    system = make_system([phi1, phi2], [Fraction(1, 2), Fraction(1, 2)])
    est = stoch_height_exact(system, ONE, n)
    assert est.value >= 0.0
