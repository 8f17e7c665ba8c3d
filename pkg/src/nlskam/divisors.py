"""Diophantine conditions, divisors and the iteration schedule."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .keys import MonomialKey, tail_weight
from .weights import SigmaWeight

RHO0 = (3.0 - 2.0 * math.sqrt(2.0)) / 100.0
DEFAULT_BUDGET = 5_000_000


class BudgetExceeded(ValueError):
    pass


def nearest_int_dist(x: float) -> float:
    """Distance from ``x`` to the nearest integer, in ``[0, 1/2]``."""
    return abs(x - round(x))


def _bracket_n(n: int) -> int:
    return max(1, abs(n))


def divisor_floor(l: Mapping[int, int], gamma: float) -> float:
    """``gamma * prod_n 1/(1 + l_n^2 <n>^4)`` with ``<n> = max(1, |n|)``."""
    if not any(l.values()):
        raise ValueError("divisor_floor needs a nonzero l")
    out = gamma
    for n, ln in l.items():
        out /= 1.0 + ln * ln * _bracket_n(n) ** 4
    return out


@dataclass(frozen=True)
class DiophantineReport:
    """Worst ratio ``||sum l_n V_n|| / prod 1/(1+l_n^2<n>^4)`` over the family."""

    min_ratio: float
    witness: dict
    checked_count: int

    def passes(self, gamma: float) -> bool:
        return self.min_ratio >= gamma

    def to_dict(self) -> dict:
        return {"min_ratio": self.min_ratio, "witness": {str(k): v for k, v in self.witness.items()},
                "checked_count": self.checked_count}


def _lattice(window: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    modes = np.arange(-window, window + 1)
    L = np.array(list(itertools.product(range(-height, height + 1), repeat=modes.size)), dtype=np.int64)
    L = L[np.any(L != 0, axis=1)]
    inv_floor = np.prod(1.0 + L.astype(float) ** 2 * np.maximum(1, np.abs(modes))[None, :] ** 4.0, axis=1)
    return L, inv_floor


_LATTICE_CACHE: dict = {}


def _cached_lattice(window: int, height: int):
    key = (window, height)
    if key not in _LATTICE_CACHE:
        _LATTICE_CACHE[key] = _lattice(window, height)
    return _LATTICE_CACHE[key]


def _min_ratios(Vs: np.ndarray, window: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    L, inv_floor = _cached_lattice(window, height)
    x = Vs @ L.T.astype(float)
    ratio = np.abs(x - np.round(x)) * inv_floor[None, :]
    idx = np.argmin(ratio, axis=1)
    return ratio[np.arange(Vs.shape[0]), idx], idx


def _check_budget(window: int, height: int, budget: int) -> int:
    if height < 1:
        raise ValueError("height L must be >= 1")
    size = (2 * height + 1) ** (2 * window + 1)
    if size > budget:
        raise BudgetExceeded(f"(2L+1)^(2M+1) = {size} exceeds budget {budget}")
    return size - 1


def diophantine_verify(V: Mapping[int, float], gamma: float, window: int, height: int,
                       budget: int = DEFAULT_BUDGET) -> DiophantineReport:
    """Exhaustive check of ``||sum l_n V_n|| >= gamma prod 1/(1+l_n^2<n>^4)``.

    Every ``l != 0`` supported in ``[-M, M]`` with ``|l_n| <= L`` is tried;
    the report's ``min_ratio`` is compared to ``gamma`` by ``passes``.
    ``gamma`` is accepted for interface symmetry and does not change the scan.
    """
    count = _check_budget(window, height, budget)
    Vs = np.array([[float(V.get(n, 0.0)) for n in range(-window, window + 1)]])
    ratio, idx = _min_ratios(Vs, window, height)
    L, _ = _cached_lattice(window, height)
    wit = {n: int(v) for n, v in zip(range(-window, window + 1), L[idx[0]]) if v}
    return DiophantineReport(float(ratio[0]), wit, count)


def diophantine_measure(gamma, window: int, height: int, samples: int, seed: int = 0,
                        budget: int = DEFAULT_BUDGET, chunk: int = 256):
    """Monte-Carlo fraction of uniform ``V in [0,1]^(2M+1)`` failing at ``gamma``.

    ``gamma`` may be a scalar or a sequence; a sequence is evaluated on one
    common sample set and an array of fractions is returned.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    _check_budget(window, height, budget)
    rng = np.random.default_rng(seed)
    Vs = rng.random((samples, 2 * window + 1))
    ratios = np.concatenate([_min_ratios(Vs[i:i + chunk], window, height)[0]
                             for i in range(0, samples, chunk)])
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    frac = (ratios[None, :] < g[:, None]).mean(axis=1)
    return float(frac[0]) if np.ndim(gamma) == 0 else frac


def divisor(key: MonomialKey, Vtilde: Mapping[int, float]) -> float:
    """``sum (k_n - k'_n)(n^2 + V_n)``."""
    d = 0.0
    for n, e in key.k:
        d += e * (n * n + Vtilde.get(n, 0.0))
    for n, e in key.kp:
        d -= e * (n * n + Vtilde.get(n, 0.0))
    return d


def key_floor(key: MonomialKey, gamma: float) -> float:
    """Floor with ``l = k - k'`` (for diagnostics); ``inf`` when ``k = k'``."""
    l = dict(key.k)
    for n, e in key.kp:
        l[n] = l.get(n, 0) - e
    l = {n: v for n, v in l.items() if v}
    return divisor_floor(l, gamma) if l else math.inf


@dataclass(frozen=True)
class Schedule:
    """Iteration parameters at step ``s``.

    ``N_star_raw_log`` is ``B_s^(1/sigma)`` (the log of the unclamped
    ``N_s*``); ``N_star_s`` is that value clamped to the window.
    """

    s: int
    sigma: float
    eps0: float
    delta_s: float
    rho_s: float
    eps_s: float
    lambda_s: float
    eta_s: float
    d_s: float
    B_s: float
    N_s: float
    N_star_raw_log: float
    N_star_s: int

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def eps_next(self) -> float:
        return eps_power(self.eps0, self.s + 1)

    @property
    def rho_next(self) -> float:
        return self.rho_s + 3.0 * self.delta_s


def eps_power(eps0: float, s: int) -> float:
    """``eps0^((3/2)^s)``, underflowing to 0.0 gracefully."""
    return eps0 ** (1.5 ** s)


def delta(s: int) -> float:
    return RHO0 / ((s + 4) * math.log(s + 4) ** 2)


def schedule(s: int, sigma: float, eps0: float, window: int | None = None) -> Schedule:
    """Parameters at step ``s`` from the closed forms and recursions."""
    if not 0 < eps0 < 1:
        raise ValueError("eps0 must lie in (0, 1)")
    if not sigma > 2:
        raise ValueError("sigma must exceed 2")
    rho = RHO0 + 3.0 * sum(delta(t) for t in range(s))
    d = sum(1.0 / (math.pi ** 2 * t * t) for t in range(1, s + 1))
    log_eps = [math.log(eps0) * 1.5 ** t for t in range(s + 1)]
    # eta_0 = lambda_0, eta_{t+1} = lambda_t eta_t / 20 (log space)
    log_eta = 0.01 * log_eps[0]
    for t in range(s):
        log_eta += 0.01 * log_eps[t] - math.log(20.0)
    ln_inv_next = -math.log(eps0) * 1.5 ** (s + 1)
    B = 3.0 * 4.0 ** sigma * (2.0 * (s + 4) * math.log(s + 4) ** 2 / RHO0) * ln_inv_next
    N = B ** ((sigma - 1.0) / sigma) / math.log(B) ** sigma
    raw = B ** (1.0 / sigma)
    if window is None:
        nstar = math.ceil(math.exp(raw)) if raw < 700 else 2 ** 62
    else:
        nstar = window if raw >= math.log(window + 1) else min(window, math.ceil(math.exp(raw)))
    return Schedule(s, sigma, eps0, delta(s), rho, eps_power(eps0, s), eps_power(eps0, s) ** 0.01,
                    math.exp(log_eta), d, B, N, raw, int(nstar))


def truncation_threshold(sched: Schedule, sigma: float | None = None) -> float:
    """``(2(s+4) ln^2(s+4)/rho0) ln(1/eps_{s+1})``."""
    s = sched.s
    return (2.0 * (s + 4) * math.log(s + 4) ** 2 / RHO0) * (-math.log(sched.eps0) * 1.5 ** (s + 1))


def eliminable(key: MonomialKey, sched: Schedule, w: SigmaWeight) -> bool:
    """Tail sum ``sum_{i>=3} w(n_i*)`` at or below the threshold (non-strict)."""
    return tail_weight(key, w) <= truncation_threshold(sched)


def schedule_inequalities(sched: Schedule) -> dict[str, bool]:
    """Checks of the schedule's side conditions at step ``s``."""
    return {
        "rho_range": RHO0 <= sched.rho_s <= 6 * RHO0,
        "rho_below_one_seventh": sched.rho_s < 1.0 / 7.0,
        "delta_admissible": sched.delta_s < min(sched.rho_s / 4.0, 3.0 - 2.0 * math.sqrt(2.0)),
        # product floor >= lambda_s needs 100 B_s (ln B_s)^(1-sigma) <= 0.01 ln(1/eps_s)
        "floor_vs_lambda": divisor_log_exponent(sched) <= 0.01 * (-math.log(sched.eps0) * 1.5 ** sched.s),
    }


def divisor_log_exponent(sched: Schedule) -> float:
    """``100 B_s (ln B_s)^(1-sigma)``: minus the log of the guaranteed product floor."""
    return 100.0 * sched.B_s * math.log(sched.B_s) ** (1.0 - sched.sigma)
