import math
import random
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlskam import (FLOAT64, RATIONAL, ActionVector, BracketCaps, Hamiltonian, MonomialKey, SequenceState,
                    SigmaWeight, build_nls, evaluate, flow_guard, lie_transform, poisson_bracket, vector_field)
from nlskam.algebra import (bracket_with_stats, flow_guard_log, flow_guard_threshold, nls_sextuples, normal_form_hamiltonian)
from nlskam.backend import coerce
from nlskam.divisors import divisor

import oracles
from conftest import conserving_hamiltonian

WIDE = BracketCaps(degree_cap=100)


def H_of(w, window, terms, backend=RATIONAL):
    return Hamiltonian(w, window, [(MonomialKey.of(*k), c) for k, c in terms], backend)


class TestBracketExamples:
    def test_hopping_pair(self, w_desk):
        A = H_of(w_desk, 2, [((None, {1: 1}, {2: 1}), 1)])
        B = H_of(w_desk, 2, [((None, {2: 1}, {1: 1}), 1)])
        i = coerce(1j, RATIONAL)
        expected = H_of(w_desk, 2, [((None, {2: 1}, {2: 1}), i), ((None, {1: 1}, {1: 1}), -i)])
        assert poisson_bracket(A, B) == expected

    def test_normal_form_sign_convention(self, w_desk):
        V = {n: Fraction(n + 3, 11) for n in range(-3, 4)}
        N = normal_form_hamiltonian(w_desk, 3, V, RATIONAL)
        key = MonomialKey.of({0: 1}, {3: 1, -1: 1}, {1: 2})
        M = Hamiltonian(w_desk, 3, [(key, Fraction(2, 5))], RATIONAL)
        D = 9 + V[3] + 1 + V[-1] - 2 * (1 + V[1])
        got = poisson_bracket(N, M)
        assert got == M.scale(coerce(complex(0, -1), RATIONAL) * coerce(D, RATIONAL))
        assert D == divisor(key, {n: float(v) for n, v in V.items()}) or math.isclose(
            float(D), divisor(key, {n: float(v) for n, v in V.items()}))

    @pytest.mark.parametrize("backend", [RATIONAL, FLOAT64])
    def test_self_bracket_zero(self, w_desk, rng, backend):
        H = conserving_hamiltonian(rng, w_desk, backend=backend)
        assert not poisson_bracket(H, H, WIDE)

    def test_matches_oracle(self, w_desk, rng):
        for _ in range(40):
            A = conserving_hamiltonian(rng, w_desk, window=3, terms=6)
            B = conserving_hamiltonian(rng, w_desk, window=3, terms=6)
            want = oracles.coefficients(oracles.bracket(A, B, 3), 3)
            assert oracles.library_coefficients(poisson_bracket(A, B, WIDE)) == want

    def test_float_matches_exact(self, w_desk, rng):
        for _ in range(40):
            A = conserving_hamiltonian(rng, w_desk, window=4)
            B = conserving_hamiltonian(rng, w_desk, window=4)
            ex = poisson_bracket(A, B, WIDE).to_backend(FLOAT64)
            fl = poisson_bracket(A.to_backend(FLOAT64), B.to_backend(FLOAT64), WIDE)
            assert set(ex.terms) == set(fl.terms)
            for k, c in ex.items():
                assert abs(fl[k] - c) <= 1e-12 * abs(c)


class TestBracketAlgebra:
    def test_antisymmetry_and_bilinearity(self, w_desk, rng):
        for _ in range(20):
            A, B, C = (conserving_hamiltonian(rng, w_desk, window=3, terms=5) for _ in range(3))
            assert poisson_bracket(A, B, WIDE) == -poisson_bracket(B, A, WIDE)
            lam = coerce(Fraction(-3, 4), RATIONAL)
            assert poisson_bracket(A.scale(lam) + C, B, WIDE) == (
                poisson_bracket(A, B, WIDE).scale(lam) + poisson_bracket(C, B, WIDE))

    def test_leibniz(self, w_desk, rng):
        for _ in range(20):
            A, B, C = (conserving_hamiltonian(rng, w_desk, window=3, terms=1) for _ in range(3))
            lhs = poisson_bracket(A, oracles.multiply(B, C), WIDE)
            rhs = (oracles.multiply(poisson_bracket(A, B, WIDE), C)
                   + oracles.multiply(B, poisson_bracket(A, C, WIDE)))
            assert lhs == rhs

    def test_jacobi(self, w_desk, rng):
        caps = BracketCaps(degree_cap=12)
        for _ in range(15):
            A, B, C = (conserving_hamiltonian(rng, w_desk, window=3, terms=4, max_deg=4) for _ in range(3))
            pb = lambda x, y: poisson_bracket(x, y, caps)
            total = pb(A, pb(B, C)) + pb(B, pb(C, A)) + pb(C, pb(A, B))
            assert not total

    @given(st.integers(0, 10 ** 6))
    def test_conservation_inherited(self, seed):
        r = random.Random(seed)
        w = SigmaWeight(2.5)
        A = conserving_hamiltonian(r, w, window=4, backend=FLOAT64)
        B = conserving_hamiltonian(r, w, window=4, backend=FLOAT64)
        assert all(k.conserving for k in poisson_bracket(A, B, WIDE).terms)

    def test_degree_cap_drops_and_counts(self, w_desk):
        A = H_of(w_desk, 2, [((None, {1: 3}, {1: 3}), 1)], FLOAT64)
        B = H_of(w_desk, 2, [((None, {2: 1, 0: 1, 1: 2}, {1: 4}), 1)], FLOAT64)
        assert A.max_degree() + B.max_degree() - 2 == 12
        out, st_ = bracket_with_stats(A, B, BracketCaps(degree_cap=10))
        assert not out and st_.dropped == 1 and st_.dropped_mass == pytest.approx(6.0)
        out, st_ = bracket_with_stats(A, B, BracketCaps(degree_cap=12))
        assert len(out) == 1 and st_.dropped == 0

    def test_thread_count_does_not_change_result(self, w_desk, rng):
        A = conserving_hamiltonian(rng, w_desk, window=4, terms=10, backend=FLOAT64)
        B = conserving_hamiltonian(rng, w_desk, window=4, terms=10, backend=FLOAT64)
        one = poisson_bracket(A, B, BracketCaps(degree_cap=100, threads=1))
        four = poisson_bracket(A, B, BracketCaps(degree_cap=100, threads=4))
        assert list(one.items()) == list(four.items())


class TestLieTransform:
    def test_zero_generator(self, w_desk, rng):
        H = conserving_hamiltonian(rng, w_desk, window=3)
        out, tail = lie_transform(H, H.like())
        assert out == H and tail.converged

    def test_first_order_cancellation(self, w_desk):
        V = {n: Fraction(1, 10 * (abs(n) + 1)) for n in range(-3, 4)}
        N = normal_form_hamiltonian(w_desk, 3, V, RATIONAL)
        key = MonomialKey.of(None, {3: 1, -1: 1}, {1: 2})
        R = Hamiltonian(w_desk, 3, [(key, Fraction(1, 10 ** 8))], RATIONAL)
        D = coerce(9 + V[3] + 1 + V[-1] - 2 - 2 * V[1], RATIONAL)
        F = R.scale(coerce(-1j, RATIONAL) / D)
        out, _ = lie_transform(N, F, BracketCaps(order_cap=1))
        assert out - N + R == N.like()

    def test_conservation_audit(self, w_desk, rng):
        H = conserving_hamiltonian(rng, w_desk, window=2, terms=4, max_deg=4, backend=FLOAT64).scale(1e-3)
        F = conserving_hamiltonian(rng, w_desk, window=2, terms=3, max_deg=4, backend=FLOAT64).scale(1e-3)
        out, tail = lie_transform(H, F, BracketCaps(degree_cap=12, order_cap=6))
        assert all(k.conserving for k in out.terms)
        assert tail.orders >= 1


class TestFlowGuard:
    def test_zero_passes(self, w_desk):
        v = flow_guard(Hamiltonian(w_desk, 2), 0.1, 0.02)
        assert v.passed and v.lhs == 0

    @pytest.mark.parametrize("sigma,delta", [(2.5, 0.02), (3.0, 0.1), (6.0, 0.17)])
    def test_threshold_edges(self, sigma, delta):
        # the accepted norm is far below double range, so perturb its log relatively
        log_thr = flow_guard_threshold(sigma, delta)
        assert log_thr < -700
        assert flow_guard_log(log_thr * (1 + mpmath.mpf("1e-9")), sigma, delta).passed
        assert not flow_guard_log(log_thr * (1 - mpmath.mpf("1e-9")), sigma, delta).passed

    def test_realistic_generator_fails(self, w_desk):
        F = Hamiltonian(w_desk, 1, [(MonomialKey.of(None, {1: 1, -1: 1}, {0: 2}), 1e-300)])
        assert not flow_guard(F, 0.1, 0.02).passed

    @pytest.mark.parametrize("rho,delta", [(1.0, 0.2), (0.1, 0.03), (0.1, 0.0)])
    def test_parameter_errors(self, w_desk, rho, delta):
        with pytest.raises(ValueError):
            flow_guard(Hamiltonian(w_desk, 2), rho, delta)


class TestEvaluation:
    def test_examples(self, w_desk):
        assert evaluate(Hamiltonian(w_desk, 2), SequenceState({1: 1.0})) == 0
        H = H_of(w_desk, 2, [((None, {1: 1}, {1: 1}), 1.0)], FLOAT64)
        assert evaluate(H, SequenceState({1: 2.0})) == pytest.approx(4.0)

    def test_normal_form_field(self, w_desk):
        V = {n: 0.1 * n for n in range(-2, 3)}
        N = normal_form_hamiltonian(w_desk, 2, V)
        q = SequenceState({n: complex(0.1 * n, 0.2) for n in range(-2, 3)})
        X = vector_field(N, q)
        for n in range(-2, 3):
            assert X[n] == pytest.approx(1j * (n * n + V[n]) * q[n])

    def test_constant_has_no_field(self, w_desk):
        H = H_of(w_desk, 2, [((None, None, None), 3.0)], FLOAT64)
        X = vector_field(H, SequenceState({0: 1.0}))
        assert all(v == 0 for v in X.q.values())

    def test_finite_difference(self, w_desk, rng):
        # i dH/dconj(q_n) = i (dH/dx + i dH/dy) / 2 with q = x + i y
        h = 1e-6
        for _ in range(20):
            H = conserving_hamiltonian(rng, w_desk, window=2, terms=6, backend=FLOAT64)
            i0 = ActionVector({n: rng.uniform(0, .1) for n in range(-2, 3)})
            q = {n: complex(rng.uniform(-.6, .6), rng.uniform(-.6, .6)) for n in range(-2, 3)}
            X = vector_field(H, SequenceState(q), i0)
            for n in range(-2, 3):
                f = lambda dz: evaluate(H, SequenceState({**q, n: q[n] + dz}), i0)
                dx = (f(h) - f(-h)) / (2 * h)
                dy = (f(1j * h) - f(-1j * h)) / (2 * h)
                fd = 1j * (dx + 1j * dy) / 2
                assert abs(X[n] - fd) <= 1e-6 * max(1.0, abs(fd))


class TestBuildNls:
    def test_enumeration_count(self, w_desk):
        assert oracles.nls_tuple_count(1) == 141
        assert sum(1 for _ in nls_sextuples(1)) == 141
        H = build_nls(1, Fraction(1), {n: Fraction(1, 2) for n in range(-1, 2)}, w_desk, RATIONAL)
        sextic = H.filter(lambda k: k.degree == 6)
        # each stored coefficient counts the orderings of its sextuple
        total = coerce(0, RATIONAL)
        for _, c in sextic.items():
            total += c
        assert total == coerce(141, RATIONAL)
        assert len(sextic) == 16 and len(H) == 19

    def test_count_window_two(self, w_desk):
        assert sum(1 for _ in nls_sextuples(2)) == oracles.nls_tuple_count(2)

    def test_eps_zero_quadratic(self, w_desk):
        H = build_nls(3, 0.0, {n: 0.5 for n in range(-3, 4)}, w_desk)
        assert len(H) == 7 and H.max_degree() == 2

    def test_generated_keys_conserve(self, w_desk):
        H = build_nls(3, 1e-8, {n: 0.5 for n in range(-3, 4)}, w_desk)
        assert all(k.conserving for k in H.terms)

    @pytest.mark.parametrize("V", [{0: 1.5}, {0: -0.1}])
    def test_rejects_bad_potential(self, w_desk, V):
        with pytest.raises(ValueError):
            build_nls(1, 1e-8, V, w_desk)

    def test_rejects_bad_window(self, w_desk):
        with pytest.raises(ValueError):
            build_nls(0, 1e-8, {}, w_desk)


def test_vector_field_on_window_matches_numpy_linear(w_desk):
    H = normal_form_hamiltonian(w_desk, 1, {-1: 0.2, 0: 0.0, 1: 0.3})
    q = SequenceState({-1: 1j, 0: 1.0, 1: -1.0})
    X = vector_field(H, q)
    assert np.allclose([X[n] for n in (-1, 0, 1)], [1j * 1.2 * 1j, 0, 1j * 1.3 * -1])
