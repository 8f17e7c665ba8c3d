import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlskam import MonomialKey, SigmaWeight, diophantine_measure, diophantine_verify, divisor, schedule
from nlskam.divisors import (RHO0, BudgetExceeded, delta, divisor_floor, eliminable, eps_power,
                             nearest_int_dist, schedule_inequalities, truncation_threshold)
from nlskam.lemmas import resonance_margin

GOLDEN = (1 + 5 ** 0.5) / 2


@pytest.mark.parametrize("x,d", [(0.5, 0.5), (3.2, 0.2), (-1.7, 0.3), (4.0, 0.0)])
def test_nearest_int_dist(x, d):
    assert nearest_int_dist(x) == pytest.approx(d)


class TestFloor:
    def test_examples(self):
        assert divisor_floor({0: 1}, 0.1) == pytest.approx(0.05)
        assert divisor_floor({2: 1}, 1.0) == pytest.approx(1 / 17)

    def test_zero_l_rejected(self):
        with pytest.raises(ValueError):
            divisor_floor({1: 0}, 1.0)

    @given(st.dictionaries(st.integers(-5, 5), st.integers(-4, 4), min_size=1), st.integers(-5, 5))
    def test_monotone(self, l, n):
        if not any(l.values()):
            return
        grown = dict(l)
        grown[n] = grown.get(n, 0) + (1 if grown.get(n, 0) >= 0 else -1)
        assert divisor_floor(grown, 1.0) <= divisor_floor(l, 1.0)


def brute_min_ratio(V, window, height, order):
    """Independent scan over l in a shuffled order."""
    best = math.inf
    modes = list(range(-window, window + 1))
    for l in order:
        x = sum(li * V[n] for li, n in zip(l, modes))
        prod = 1.0
        for li, n in zip(l, modes):
            prod *= 1 + li * li * max(1, abs(n)) ** 4
        best = min(best, abs(x - round(x)) * prod)
    return best


class TestDiophantine:
    def test_zero_potential_fails(self):
        rep = diophantine_verify({n: 0.0 for n in range(-2, 3)}, 1e-3, 2, 2)
        assert rep.min_ratio == 0 and not rep.passes(1e-3)

    @pytest.mark.parametrize("kind", ["golden", "sqrt_primes"])
    def test_reenumeration(self, kind):
        # frac(n phi) is an affine sequence mod 1: l with sum l_n n = 0 is exactly resonant
        if kind == "golden":
            V = {n: (n * GOLDEN) % 1.0 for n in range(-2, 3)}
        else:
            V = {n: math.sqrt(p) % 1.0 for n, p in zip(range(-2, 3), (2, 3, 5, 7, 11))}
        rep = diophantine_verify(V, 1e-3, 2, 2)
        lat = [l for l in itertools.product(range(-2, 3), repeat=5) if any(l)]
        random.Random(3).shuffle(lat)
        assert rep.min_ratio == pytest.approx(brute_min_ratio(V, 2, 2, lat), rel=1e-9, abs=1e-12)
        assert rep.checked_count == 5 ** 5 - 1
        if kind == "sqrt_primes":
            assert rep.min_ratio > 0
            assert rep.passes(rep.min_ratio) and not rep.passes(2 * rep.min_ratio)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            diophantine_verify({}, 1e-3, 6, 3, budget=10 ** 6)

    def test_measure_zero_gamma(self):
        assert diophantine_measure(0.0, 1, 2, 500) == 0.0

    def test_measure_monotone_common_samples(self):
        fr = diophantine_measure([1e-3, 1e-2, 1e-1, 0.5], 1, 2, 2000, seed=5)
        assert np.all(np.diff(fr) >= 0)

    def test_measure_reproducible(self):
        a = diophantine_measure(1e-2, 1, 2, 1000, seed=9)
        b = diophantine_measure(1e-2, 1, 2, 1000, seed=9)
        assert a == b


class TestDivisor:
    def test_example(self):
        key = MonomialKey.of(None, {3: 1, -1: 1}, {1: 2})
        assert key.conserving
        assert divisor(key, {}) == 8

    def test_resonant(self):
        key = MonomialKey.of(None, {2: 1, 1: 1}, {2: 1, 1: 1})
        assert divisor(key, {1: 0.3, 2: 0.7}) == 0

    @given(st.dictionaries(st.integers(-3, 3), st.floats(-2, 2), min_size=7, max_size=7))
    def test_perturbation_bound(self, V):
        key = MonomialKey.of(None, {3: 1, -1: 1, 0: 1}, {1: 2, 0: 1})
        l1 = 1 + 1 + 2
        assert abs(divisor(key, V) - 8) <= 2 * l1 + 1e-12


class TestSchedule:
    def test_rho0(self):
        assert RHO0 == pytest.approx(1.71573e-3, rel=1e-5)

    def test_eps_ladder(self):
        assert schedule(1, 2.5, 1e-8).eps_s == pytest.approx(1e-12, rel=1e-14)
        assert schedule(2, 2.5, 1e-8).eps_s == pytest.approx(1e-18, rel=1e-14)
        assert eps_power(1e-8, 0) == 1e-8

    def test_delta0(self):
        assert delta(0) == pytest.approx(RHO0 / (4 * math.log(4) ** 2))
        assert delta(0) == pytest.approx(2.232e-4, rel=1e-3)

    def test_side_conditions_up_to_50(self):
        assert sum(delta(s) for s in range(51)) <= 5 / 3 * RHO0
        for s in range(51):
            sch = schedule(s, 2.5, 1e-8)
            assert sch.rho_s < 1 / 7
            chk = schedule_inequalities(sch)
            assert chk["rho_range"] and chk["delta_admissible"]

    def test_threshold_example(self):
        sch = schedule(0, 2.5, 1e-8)
        want = (2 * 4 * math.log(4) ** 2 / RHO0) * math.log(1e12)
        assert truncation_threshold(sch, 2.5) == pytest.approx(want, rel=1e-12)

    def test_threshold_increasing(self):
        vals = [truncation_threshold(schedule(s, 2.5, 1e-8)) for s in range(11)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_threshold_vanishes_as_eps_to_one(self):
        assert truncation_threshold(schedule(0, 2.5, 1 - 1e-12)) < 1e-5

    def test_eliminable_is_non_strict(self):
        w = SigmaWeight(2.5)
        key = MonomialKey.of(None, {1: 1, 0: 1}, {1: 1, 0: 1})
        sch = schedule(0, 2.5, 1e-8)
        assert eliminable(key, sch, w)

    def test_window_clamp(self):
        sch = schedule(0, 2.5, 1e-8, window=3)
        assert sch.N_star_s == 3 and sch.N_star_raw_log > math.log(4)

    @pytest.mark.parametrize("kw", [{"eps0": 0.0}, {"eps0": 1.0}, {"sigma": 2.0}])
    def test_validation(self, kw):
        args = {"s": 0, "sigma": 2.5, "eps0": 1e-8, **kw}
        with pytest.raises(ValueError):
            schedule(**args)


def test_resonance_bound_sample():
    # near resonance n1 = m+1, n2 = m with |D| <= 1 and |V| <= 2
    w = SigmaWeight(2.5)
    key = MonomialKey.of(None, {6: 1, -5: 1, 0: 1}, {5: 1, -4: 1, 0: 1})
    l = {6: 1, -5: 1, 5: -1, -4: -1}
    assert key.conserving
    assert resonance_margin(key, l, w) >= 0
