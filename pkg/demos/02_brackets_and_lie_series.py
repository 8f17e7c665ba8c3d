"""
Poisson brackets and Lie series
===============================

Brackets follow {A, B} = i sum_n (dA/dq_n dB/dqb_n - dA/dqb_n dB/dq_n), so
bracketing the normal form with a monomial multiplies it by -i times its
small divisor.  The Lie series exp(ad_F) H is summed until terms drop out.
"""

import math
from fractions import Fraction

from nlskam import RATIONAL, BracketCaps, Hamiltonian, MonomialKey, SigmaWeight, lie_transform, poisson_bracket
from nlskam.algebra import normal_form_hamiltonian
from nlskam.divisors import divisor

w = SigmaWeight(2.5, math.e)


def show(label, H):
    print(label)
    for k, c in H.items():
        print(f"   {k}: {c}")


# exact arithmetic: coefficients are Gaussian rationals
V = {n: Fraction(n + 3, 11) for n in range(-3, 4)}
N = normal_form_hamiltonian(w, 3, V, RATIONAL)
key = MonomialKey.of(None, {3: 1, -1: 1}, {1: 2})
M = Hamiltonian(w, 3, [(key, Fraction(2, 5))], RATIONAL)
show("{N, M} =", poisson_bracket(N, M))
print("divisor of the key:", divisor(key, {n: float(v) for n, v in V.items()}))

# hopping pair: {q_1 qb_2, q_2 qb_1} = i(|q_2|^2 - |q_1|^2)
A = Hamiltonian(w, 2, [(MonomialKey.of(None, {1: 1}, {2: 1}), 1)], RATIONAL)
B = Hamiltonian(w, 2, [(MonomialKey.of(None, {2: 1}, {1: 1}), 1)], RATIONAL)
show("{A, B} =", poisson_bracket(A, B))

# Lie transform of a float Hamiltonian by a small generator
Nf = normal_form_hamiltonian(w, 2, {n: 0.1 * (n + 2) for n in range(-2, 3)})
F = Hamiltonian(w, 2, [(MonomialKey.of(None, {2: 1, -1: 1}, {1: 1, 0: 1}), 1e-3j),
                       (MonomialKey.of(None, {1: 1, 0: 1}, {2: 1, -1: 1}), 1e-3j)])
out, tail = lie_transform(Nf, F, BracketCaps(degree_cap=8), rho=0.01)
print(f"Lie transform: {len(out)} terms, series tail {tail}")
