import math
import random

import mpmath
import pytest

from nlskam import SUITES, MonomialKey, SigmaWeight, compute_c_sigma
from nlskam.lemmas import (SQRT_BOUND, a3_margin, a5_margin, g_bound_margin, log_superadditivity_margin,
                           product_margin, random_conserving_key, resonance_margin, verify_bracket_estimate,
                           verify_log_superadditivity, verify_max_bounds, verify_norm_equivalence,
                           verify_resonance_bound, verify_series_and_products, verify_tame,
                           verify_vector_field_bound)


class TestSuperadditivity:
    def test_corner(self):
        c = compute_c_sigma(3.0)
        assert log_superadditivity_margin(c, c, 3.0) >= 0

    def test_margin_grows_with_x(self):
        c = compute_c_sigma(3.0)
        ms = [log_superadditivity_margin(x, c, 3.0) for x in (c, 1e10, 1e20, 1e40)]
        assert ms == sorted(ms)

    def test_suite_small(self):
        v = verify_log_superadditivity(3.0, trials=500)
        assert v.passed and v.worst_margin > 0 and v.trials == 503


class TestTame:
    def test_true_cutoff(self):
        assert verify_tame(2.5, trials=500).passed

    def test_keys_conserve_momentum(self):
        rnd = random.Random(0)
        assert all(random_conserving_key(rnd).momentum == 0 for _ in range(200))

    def test_reproducible_from_seed(self):
        a = verify_tame(3.0, trials=300, seed=11, c_override=math.e)
        b = verify_tame(3.0, trials=300, seed=11, c_override=math.e)
        assert a == b


class TestResonance:
    def test_equal_k_kprime(self):
        key = MonomialKey.of(None, {2: 1, 1: 1}, {2: 1, 1: 1})
        assert resonance_margin(key, {}, SigmaWeight(2.5)) == math.inf

    def test_targeted_pair(self):
        w = SigmaWeight(2.5)
        m = 40
        key = MonomialKey.of(None, {m + 1: 1, -m: 1}, {m: 1, -m + 1: 1})
        assert key.conserving
        assert resonance_margin(key, {m + 1: 1, -m: 1, m: -1, -m + 1: -1}, w) > 0

    def test_suite_small(self):
        v = verify_resonance_bound(trials=500)
        assert v.passed and v.trials >= 500


class TestSeries:
    def test_near_product_boundary(self):
        assert a5_margin(SQRT_BOUND - 1e-3, SigmaWeight(2.5)) > 0

    def test_sigma_21(self):
        v = verify_series_and_products(2.1, (0.01,))
        assert v.passed

    def test_single_mode_product(self):
        # window of size one: truncated geometric sum below 1/(1-x)
        w = SigmaWeight(2.5)
        m = a3_margin(0.1, w, window=0, amax=400)
        x = mpmath.exp(-0.1 * w(0))
        exact = -mpmath.log(1 - x ** 401)
        assert m == pytest.approx(float(exact), rel=1e-6)

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            verify_series_and_products(2.5, (1.5,))


class TestMaxBounds:
    @pytest.mark.parametrize("p,delta", [(1, 0.05), (2, 0.05), (2, 0.5)])
    def test_g_stationary_point(self, p, delta):
        with mpmath.workdps(50):
            margin, x = g_bound_margin(p, delta)
            assert x == pytest.approx(p / delta, rel=1e-6)
            assert abs(margin) < 1e-9

    def test_empty_product(self):
        assert product_margin({}, 2, 0.05, SigmaWeight(3.0)) > 0

    def test_suite(self):
        v = verify_max_bounds(3.0, (0.05,), 2, trials=1000)
        assert v.passed

    def test_rejects_p(self):
        with pytest.raises(ValueError):
            verify_max_bounds(p=3)


class TestAnalyticSuites:
    def test_bracket_estimate(self):
        assert verify_bracket_estimate(trials=50).passed

    def test_norm_equivalence(self):
        v = verify_norm_equivalence(trials=50)
        assert v.passed

    def test_vector_field_bound(self):
        assert verify_vector_field_bound(trials=30).passed

    def test_guard(self):
        with pytest.raises(ValueError):
            verify_vector_field_bound(rho=0.5)


def test_verdict_serializes():
    d = verify_tame(2.5, trials=10).to_dict()
    assert set(d) >= {"lemma", "grid", "trials", "worst_margin", "witness", "passed", "seed"}


def test_suite_registry():
    assert set(SUITES) == {"log_superadditivity", "tame", "resonance_bound", "series_and_products",
                           "max_bounds", "bracket_estimate", "norm_equivalence", "vector_field_bound"}
