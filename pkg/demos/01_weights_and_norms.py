"""
Weights, keys and weighted norms
================================

The weight w(n) = ln^sigma(max(c, |n|)) sets how fast mode amplitudes decay
on the torus, and the weighted norm measures a Hamiltonian against it.
"""

import math

import numpy as np

from nlskam import ActionVector, Hamiltonian, MonomialKey, SigmaWeight, compute_c_sigma, weighted_norm

# the desk weight uses the cutoff c = e; the true cutoff grows very fast in sigma
w = SigmaWeight(2.5, math.e)
for sigma in (2.1, 2.5, 3.0):
    print(f"sigma={sigma}: true cutoff c(sigma) = {compute_c_sigma(sigma):.4g}")

ns = np.arange(0, 9)
print("w(n) for n = 0..8:", np.round([w(int(n)) for n in ns], 4))

# torus actions decay like exp(-2 w(n))
i0 = ActionVector.torus(w, 4)
print("I_n(0):", {n: f"{v:.3e}" for n, v in sorted(i0.values.items())})

# a single conserving monomial q_1 q_2 qb_1 qb_2 and its norm at a few rho
key = MonomialKey.of(None, {1: 1, 2: 1}, {1: 1, 2: 1})
print("key", key, "conserving:", key.conserving)
H = Hamiltonian(SigmaWeight(3.0, math.e), 2, [(key, 1.0)])
for rho in (0.0, 0.1, 0.5):
    print(f"|H|_rho at rho={rho}: {weighted_norm(H, rho):.6f}")
