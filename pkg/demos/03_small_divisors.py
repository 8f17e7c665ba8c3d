"""
Small divisors and Diophantine frequencies
==========================================

A frequency vector V is accepted when every integer combination l.V stays
gamma prod 1/(1 + l_n^2 <n>^4) away from the integers.  Uniform random V
fail with probability roughly proportional to gamma.
"""

import math

import numpy as np

from nlskam import diophantine_measure, diophantine_verify, schedule

# sqrt of primes modulo 1 is a well-spread vector
primes = [2, 3, 5, 7, 11]
V = {n: math.sqrt(p) % 1.0 for n, p in zip(range(-2, 3), primes)}
rep = diophantine_verify(V, 1e-3, window=2, height=2)
print(f"min ratio {rep.min_ratio:.3e} at l = {rep.witness} ({rep.checked_count} vectors)")
print("passes gamma=1e-3:", rep.passes(1e-3))

# any arithmetic progression modulo 1 is exactly resonant
golden = (1 + math.sqrt(5)) / 2
Vg = {n: (n * golden) % 1.0 for n in range(-2, 3)}
print("golden progression min ratio:", diophantine_verify(Vg, 1e-3, 2, 2).min_ratio)

gammas = np.array([1e-3, 1e-2, 1e-1])
frac = diophantine_measure(gammas, window=2, height=2, samples=10_000, seed=0)
for g, f in zip(gammas, frac):
    print(f"gamma={g:.0e}: violating fraction {f:.4f}, fraction/gamma {f / g:.2f}")

# the divisor guard gamma * lambda_s along the step schedule
for s in range(4):
    sch = schedule(s, 2.5, 1e-8, 3)
    print(f"s={s}: eps_s={sch.eps_s:.1e} rho_s={sch.rho_s:.5f} guard={1e-3 * sch.lambda_s:.3e}")
