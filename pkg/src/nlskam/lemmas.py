"""Numerical checks of the analytic estimates behind the iteration.

Every check compares a left-hand side with a right-hand side and records a
margin (``ln RHS - ln LHS`` unless stated otherwise), so a check passes iff
its worst margin is non-negative.  The constants involved overflow doubles,
hence the log space and mpmath throughout.  Infinite sums are cut at
``|n| <= 10^6`` with an integral bound for the monotone tail.
"""

from __future__ import annotations

import math
from fractions import Fraction
import random
from dataclasses import asdict, dataclass, field

import mpmath
import numpy as np
from scipy.optimize import minimize_scalar

from .algebra import BracketCaps, poisson_bracket, vector_field
from .classify import classify, plus_norm
from .divisors import divisor
from .hamiltonian import ActionVector, Hamiltonian, SequenceState, seq_norm, weighted_norm
from .keys import MonomialKey, multi_index, tail_weight, tame_defect
from .weights import SigmaWeight, compute_c_sigma

SQRT_BOUND = 3.0 - 2.0 * math.sqrt(2.0)
PARTIAL = 10 ** 6
# the g-max bound is attained with equality at x = p/delta; allow 50-digit round-off
ROUNDOFF = mpmath.mpf("1e-40")


@dataclass
class LemmaVerdict:
    lemma: str
    grid: dict
    trials: int
    worst_margin: float
    witness: dict
    passed: bool
    seed: int | None = None
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_margin"] = _jsonable(self.worst_margin)
        return d


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


class _Worst:
    """Running minimum of margins with the corresponding witness."""

    def __init__(self, tol=0):
        self.margin = math.inf
        self.witness: dict = {}
        self.count = 0
        self.tol = tol

    def add(self, margin, witness: dict) -> None:
        self.count += 1
        m = float(margin) if not isinstance(margin, mpmath.mpf) else margin
        if m < self.margin:
            self.margin = m
            self.witness = witness

    def verdict(self, lemma, grid, seed=None, notes=None) -> LemmaVerdict:
        margin = float(self.margin)
        return LemmaVerdict(lemma, grid, self.count, margin, self.witness,
                            bool(self.margin >= -self.tol), seed, notes or {})


# --------------------------------------------------------------------------
# ln^s(x+y) <= ln^s x + ln^s(y)/2 for c(s) <= y <= x

def log_superadditivity_margin(x: float, y: float, sigma: float) -> float:
    lx, ly = math.log(x), math.log(y)
    lxy = lx + math.log1p(y / x)
    return lx ** sigma + 0.5 * ly ** sigma - lxy ** sigma


def verify_log_superadditivity(sigma: float = 3.0, trials: int = 10_000, seed: int = 0,
                               c: float | None = None) -> LemmaVerdict:
    """Random and boundary ``(x, y)`` with ``c <= y <= x``; margin is RHS - LHS."""
    if not sigma > 1:
        raise ValueError("sigma must exceed 1")
    c = compute_c_sigma(sigma) if c is None else c
    top = max(1e9, 100.0 * c)
    rng = np.random.default_rng(seed)
    worst = _Worst()
    for x, y in ((c, c), (top, c), (top, top)):
        worst.add(log_superadditivity_margin(x, y, sigma), {"x": x, "y": y})
    ly = rng.uniform(math.log(c), math.log(top), trials)
    for lyi, u in zip(ly, rng.random(trials)):
        y = math.exp(lyi)
        x = math.exp(lyi + u * (math.log(top) - lyi))
        worst.add(log_superadditivity_margin(x, y, sigma), {"x": x, "y": y})
    return worst.verdict("log_superadditivity", {"sigma": sigma, "c": c, "x_max": top}, seed)


# --------------------------------------------------------------------------
# tame inequality

def random_conserving_key(rng: random.Random, modes: int = 1000, max_len: int = 8,
                          max_a: int = 2, mass: bool = False) -> MonomialKey:
    """Random momentum-conserving key; ``mass=True`` also balances ``|k| = |kp|``."""
    while True:
        r = rng.randint(2, max_len)
        if mass and r % 2:
            r += 1
        if mass:
            signs = [1] * (r // 2) + [-1] * (r // 2)
        else:
            signs = [rng.choice((1, -1)) for _ in range(r)]
        ns = [rng.randint(-modes, modes) for _ in range(r - 1)]
        last = -sum(s * n for s, n in zip(signs, ns)) * signs[-1]
        if abs(last) > modes:
            continue
        ns.append(last)
        k = multi_index((n, 1) for s, n in zip(signs, ns) if s > 0)
        kp = multi_index((n, 1) for s, n in zip(signs, ns) if s < 0)
        a = multi_index({rng.randint(-modes, modes): rng.randint(0, max_a) for _ in range(rng.randint(0, 2))})
        key = MonomialKey(a, k, kp)
        assert key.momentum == 0
        return key


def verify_tame(sigma: float = 2.5, trials: int = 10_000, seed: int = 0,
                c_override: float | None = None, modes: int = 1000) -> LemmaVerdict:
    """``tame_defect >= 0`` on random momentum-conserving keys.

    ``c_override=None`` uses the true cutoff c(sigma).
    """
    if not sigma > 2:
        raise ValueError("sigma must exceed 2")
    w = SigmaWeight(sigma, c_override)
    rng = random.Random(seed)
    worst = _Worst()
    for _ in range(trials):
        key = random_conserving_key(rng, modes)
        worst.add(tame_defect(key, w), {"key": str(key)})
    return worst.verdict("tame", {"sigma": sigma, "c": w.c, "modes": modes}, seed)


# --------------------------------------------------------------------------
# resonance bound: sum |k-k'| w(n) <= 3 4^s sum_{i>=3} w(n_i)

def _resonant_sample(rng: random.Random, modes: int, max_len: int):
    """Near-resonant momentum-zero key and a |V|<=2 vector achieving |D|<=1, or None."""
    r = rng.randint(4, max_len)
    tail = [(rng.choice((1, -1)), rng.randint(-modes // 10, modes // 10)) for _ in range(r - 2)]
    P = sum(s * n for s, n in tail)
    D0 = sum(s * n * n for s, n in tail)
    p = -P  # n1 - n2
    if p == 0:
        s_ = rng.randint(-modes, modes)
        n1 = n2 = s_
    else:
        target = -D0 / p  # n1 + n2
        s_ = int(round(target))
        if (s_ - p) % 2:
            s_ += rng.choice((1, -1))
        n1, n2 = (p + s_) // 2, (s_ - p) // 2
    items = tail + [(1, n1), (-1, n2)]
    k = multi_index((n, 1) for s, n in items if s > 0)
    kp = multi_index((n, 1) for s, n in items if s < 0)
    key = MonomialKey((), k, kp)
    l: dict = {}
    for n, e in key.k:
        l[n] = l.get(n, 0) + e
    for n, e in key.kp:
        l[n] = l.get(n, 0) - e
    l = {n: v for n, v in l.items() if v}
    base = divisor(key, {})
    tot = sum(abs(v) for v in l.values())
    if tot == 0:
        V = {}
    else:
        t = max(-1.0, min(1.0, -base / (2.0 * tot)))
        V = {n: 2.0 * t * (1 if v > 0 else -1) * rng.uniform(0.9, 1.0) for n, v in l.items()}
    if abs(divisor(key, V)) > 1.0:
        return None
    return key, V, l


def resonance_margin(key: MonomialKey, l: dict, w: SigmaWeight) -> float:
    lhs = sum(abs(v) * w(n) for n, v in l.items())
    rhs = 3.0 * 4.0 ** w.sigma * tail_weight(key, w)
    if lhs == 0:
        return math.inf
    return math.log(rhs) - math.log(lhs) if rhs > 0 else -math.inf


def verify_resonance_bound(sigma: float = 2.5, trials: int = 10_000, seed: int = 0,
                           c_override: float | None = math.e, modes: int = 1000,
                           max_len: int = 8) -> LemmaVerdict:
    """Accepted samples satisfy momentum zero and ``|D| <= 1`` with ``|V_n| <= 2``."""
    if not sigma > 2:
        raise ValueError("sigma must exceed 2")
    w = SigmaWeight(sigma, c_override)
    rng = random.Random(seed)
    worst = _Worst()
    attempts = 0
    # targeted near-resonant pairs n1 = m+1, n2 = m
    for m in (1, 10, 100, 999):
        key = MonomialKey((), multi_index({m + 1: 1, -m: 1}), multi_index({m: 1, -m + 1: 1}))
        l = {m + 1: 1, -m: 1, m: -1, -m + 1: -1}
        if key.momentum == 0 and abs(divisor(key, {})) <= 1:
            worst.add(resonance_margin(key, l, w), {"key": str(key), "V": {}})
    while worst.count < trials and attempts < 200 * trials:
        attempts += 1
        got = _resonant_sample(rng, modes, max_len)
        if got is None:
            continue
        key, V, l = got
        worst.add(resonance_margin(key, l, w), {"key": str(key), "V": {str(n): v for n, v in V.items()}})
    return worst.verdict("resonance_bound", {"sigma": sigma, "c": w.c, "modes": modes}, seed,
                         {"attempts": attempts})


# --------------------------------------------------------------------------
# series and products

def _tail_integral(N: float, delta: float, sigma: float, factor: float = 1.0) -> mpmath.mpf:
    """``int_N^inf exp(-factor*delta ln^s x) dx`` via ``y = ln x``."""
    d = mpmath.mpf(delta) * factor
    f = lambda y: mpmath.exp(-d * y ** sigma + y)
    y0 = mpmath.log(N)
    peak = (1 / (d * sigma)) ** (mpmath.mpf(1) / (sigma - 1))
    pts = [y0] + ([peak] if peak > y0 else []) + [mpmath.inf]
    return mpmath.quad(f, pts)


def _floor_sum(delta: float, w: SigmaWeight, N: int = PARTIAL, power=lambda x: x):
    """``sum_{n in Z} power(exp(-delta w(n)))`` split into exact partial and tail bound."""
    c = w.c
    cfl = math.floor(c)
    n = np.arange(cfl + 1, N + 1, dtype=np.float64) if cfl < N else np.zeros(0)
    x_in = math.exp(-delta * w(0))
    head = (2 * cfl + 1) * power(x_in)
    xs = np.exp(-delta * np.log(n) ** w.sigma)
    body = 2.0 * float(np.sum(power(xs)))
    return head, body, max(N, cfl)


def lem2_margin(delta: float, sigma: float) -> mpmath.mpf:
    """``sum_{n>=3} exp(-delta ln^s n) <= (3/delta) exp((2/(delta s))^(1/(s-1)))``."""
    n = np.arange(3, PARTIAL + 1, dtype=np.float64)
    partial = mpmath.mpf(float(np.sum(np.exp(-delta * np.log(n) ** sigma))))
    lhs = partial + _tail_integral(PARTIAL, delta, sigma)
    log_rhs = mpmath.log(3 / mpmath.mpf(delta)) + (2 / (mpmath.mpf(delta) * sigma)) ** (mpmath.mpf(1) / (sigma - 1))
    return log_rhs - mpmath.log(lhs)


def a5_margin(delta: float, w: SigmaWeight) -> mpmath.mpf:
    """``prod_n 1/(1 - e^{-delta w(n)}) <= exp{(18/delta) exp{(4/delta)^(1/(s-1))}}``; margin of logs."""
    sigma = w.sigma
    mlog = lambda x: -np.log1p(-x)
    head, body, N = _floor_sum(delta, w, power=mlog)
    xN = math.exp(-delta * math.log(N) ** sigma)
    # -ln(1-x) <= x/(1-x) <= x/(1-x_N) for x <= x_N
    tail = 2 * _tail_integral(N, delta, sigma) / (1 - xN)
    log_lhs = mpmath.mpf(head) + mpmath.mpf(body) + tail
    d = mpmath.mpf(delta)
    log_rhs = (18 / d) * mpmath.exp((4 / d) ** (mpmath.mpf(1) / (sigma - 1)))
    return mpmath.log(log_rhs) - mpmath.log(log_lhs)


def a3_margin(delta: float, w: SigmaWeight, window: int = 1, amax: int = 60) -> mpmath.mpf:
    """Truncated ``sum_a exp(-delta sum a_n w(n))`` on a window versus the product."""
    modes = range(-window, window + 1)
    lhs = mpmath.mpf(1)
    rhs = mpmath.mpf(1)
    for n in modes:
        x = mpmath.exp(-mpmath.mpf(delta) * w(n))
        lhs *= sum(x ** a for a in range(amax + 1))
        rhs *= 1 / (1 - x)
    return mpmath.log(rhs) - mpmath.log(lhs)


def verify_series_and_products(sigma: float = 2.5, delta_grid=(0.01, 0.05, 0.1, 0.17),
                               c_override: float | None = math.e) -> LemmaVerdict:
    """Sum-over-``a`` bound, the ``sum e^{-delta ln^s n}`` bound and the infinite product bound."""
    w = SigmaWeight(sigma, c_override)
    worst = _Worst()
    per = {}
    for d in delta_grid:
        if not 0 < d < 1:
            raise ValueError(f"delta={d} outside (0, 1)")
        m3 = min(a3_margin(d, w, window) for window in (0, 1, 3))
        m2 = lem2_margin(d, sigma)
        worst.add(m3, {"check": "sum_over_a", "delta": d})
        worst.add(m2, {"check": "log_series", "delta": d})
        per[str(d)] = {"sum_over_a": float(m3), "log_series": float(m2)}
        if d < SQRT_BOUND:
            m5 = a5_margin(d, w)
            worst.add(m5, {"check": "product", "delta": d})
            per[str(d)]["product"] = float(m5)
    return worst.verdict("series_and_products", {"sigma": sigma, "c": w.c, "deltas": list(delta_grid)},
                         notes={"margins": per})


# --------------------------------------------------------------------------
# maxima

def _golden_max(logf, lo: float, hi: float) -> float:
    res = minimize_scalar(lambda x: -logf(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, hi)})
    return float(res.x)


def f_bound_margin(sigma: float, delta: float) -> tuple[mpmath.mpf, float]:
    """``max_{x>=1} e^{-delta x^s + x} <= exp((1/(delta s))^(1/(s-1)))``."""
    mp = mpmath.mpf
    logf = lambda x: -delta * x ** sigma + x
    xs = (1.0 / (delta * sigma)) ** (1.0 / (sigma - 1.0))
    x = _golden_max(logf, 1.0, max(2.0, 4.0 * xs))
    best = max((mp(-delta) * mp(t) ** sigma + mp(t) for t in (x, max(1.0, xs), 1.0)))
    cap = (1 / (mp(delta) * sigma)) ** (mp(1) / (sigma - 1))
    return cap - best, x


def g_bound_margin(p: float, delta: float) -> tuple[mpmath.mpf, float]:
    """``max_{x>=1} x^p e^{-delta x} <= (p/(e delta))^p`` (equality at ``x = p/delta``)."""
    mp = mpmath.mpf
    x = _golden_max(lambda t: p * math.log(t) - delta * t, 1.0, 4.0 * p / delta + 2.0)
    best = max(p * mpmath.log(mp(t)) - mp(delta) * t for t in (x, 1.0))
    cap = p * (mpmath.log(mp(p) / mp(delta)) - 1)
    return cap - best, x


def product_margin(a: dict, p: int, delta: float, w: SigmaWeight) -> mpmath.mpf:
    """``prod (1+a_n^p) e^{-2 delta a_n w(n)} <= exp{3p (p/delta)^(1/(s-1)) exp{delta^(-1/s)}}``."""
    mp = mpmath.mpf
    sigma = w.sigma
    log_lhs = sum(mpmath.log(1 + mp(v) ** p) - 2 * mp(delta) * v * w(n) for n, v in a.items())
    log_rhs = 3 * p * (mp(p) / delta) ** (mp(1) / (sigma - 1)) * mpmath.exp((1 / mp(delta)) ** (mp(1) / sigma))
    return log_rhs - log_lhs


def verify_max_bounds(sigma: float = 3.0, delta_grid=(0.01, 0.05, 0.2, 0.5, 0.9), p: int = 2,
                      trials: int = 1000, seed: int = 0, c_override: float | None = math.e) -> LemmaVerdict:
    """Closed-form caps of the two one-variable maxima and the sparse product bound."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    w = SigmaWeight(sigma, c_override)
    rng = random.Random(seed)
    worst = _Worst(tol=ROUNDOFF)
    per = {}
    with mpmath.workdps(50):
        for d in delta_grid:
            if not 0 < d < 1:
                raise ValueError(f"delta={d} outside (0, 1)")
            mf, xf = f_bound_margin(sigma, d)
            mg, xg = g_bound_margin(p, d)
            worst.add(mf, {"check": "f_max", "delta": d, "x": xf})
            worst.add(mg, {"check": "g_max", "delta": d, "x": xg})
            worst.add(product_margin({}, p, d, w), {"check": "product", "delta": d, "a": {}})
            mprod = math.inf
            for _ in range(trials):
                a = {rng.randint(-50, 50): rng.randint(1, 30) for _ in range(rng.randint(1, 8))}
                m = product_margin(a, p, d, w)
                mprod = min(mprod, float(m))
                worst.add(m, {"check": "product", "delta": d, "a": {str(n): v for n, v in a.items()}})
            per[str(d)] = {"f_max": float(mf), "g_max": float(mg), "product": mprod}
    v = worst.verdict("max_bounds", {"sigma": sigma, "p": p, "deltas": list(delta_grid), "c": w.c}, seed,
                      {"margins": per, "roundoff_allowance": float(ROUNDOFF)})
    return v


# --------------------------------------------------------------------------
# random conserving Hamiltonians

def random_conserving_hamiltonian(rng: random.Random, w: SigmaWeight, window: int, terms: int = 6,
                                  max_deg: int = 6, backend: str = "float64", scale: float = 1.0,
                                  with_a: bool = True) -> Hamiltonian:
    """Mass- and momentum-conserving Hamiltonian with ``terms`` random monomials."""
    out = []
    while len(out) < terms:
        half = rng.randint(1, max_deg // 2)
        k = [rng.randint(-window, window) for _ in range(half)]
        kp = [rng.randint(-window, window) for _ in range(half - 1)]
        last = sum(k) - sum(kp)
        if abs(last) > window:
            continue
        kp.append(last)
        a = {}
        if with_a and 2 * half + 2 <= max_deg and rng.random() < 0.3:
            a = {rng.randint(-window, window): 1}
        key = MonomialKey(multi_index(a), multi_index((n, 1) for n in k), multi_index((n, 1) for n in kp))
        if backend == "float64":
            c = complex(rng.uniform(-1, 1), rng.uniform(-1, 1)) * scale
        else:
            c = Fraction(rng.randint(-20, 20), rng.randint(1, 9))
            if not c:
                continue
        out.append((key, c))
    return Hamiltonian(w, window, out, backend)


def _bracket_rhs_log(sigma, d1, d2) -> mpmath.mpf:
    mp = mpmath.mpf
    return -mpmath.log(mp(d2)) + (1000 / mp(d1)) * mpmath.exp((100 / mp(d1)) ** (mp(1) / (sigma - 1)))


def verify_bracket_estimate(trials: int = 1000, sigma: float = 2.5, rho: float = 0.1,
                            delta1: float = 0.02, delta2: float = 0.02, seed: int = 0,
                            window: int = 6) -> LemmaVerdict:
    """``|{R1,R2}|_rho`` versus the bracket-estimate right-hand side."""
    if not (delta1 < min(rho / 4, SQRT_BOUND) and delta2 < min(rho / 4, SQRT_BOUND)):
        raise ValueError("delta1, delta2 must be < min(rho/4, 3-2 sqrt 2)")
    w = SigmaWeight(sigma)
    rng = random.Random(seed)
    caps = BracketCaps(degree_cap=40, drop_threshold=0.0)
    const = _bracket_rhs_log(sigma, delta1, delta2)
    worst = _Worst()
    for _ in range(trials):
        A = random_conserving_hamiltonian(rng, w, window, rng.randint(1, 5))
        B = random_conserving_hamiltonian(rng, w, window, rng.randint(1, 5))
        lhs = weighted_norm(poisson_bracket(A, B, caps), rho)
        if lhs == 0:
            continue
        log_rhs = const + math.log(weighted_norm(A, rho - delta1)) + math.log(weighted_norm(B, rho - delta2))
        worst.add(log_rhs - math.log(lhs), {"lhs": lhs})
    return worst.verdict("bracket_estimate", {"sigma": sigma, "rho": rho, "delta1": delta1,
                                              "delta2": delta2, "window": window}, seed)


def verify_norm_equivalence(trials: int = 1000, sigma: float = 2.5, rho: float = 0.1, delta: float = 0.02,
                            seed: int = 0, window: int = 6) -> LemmaVerdict:
    """Both directions between the plain and plus norms after classification."""
    if not (rho > 0 and delta > 0):
        raise ValueError("rho and delta must be positive")
    w = SigmaWeight(sigma)
    rng = random.Random(seed)
    mp = mpmath.mpf
    c_up = 3 * (6 / mp(delta)) ** (mp(1) / (sigma - 1)) * mpmath.exp((6 / mp(delta)) ** (mp(1) / sigma))
    c_down = mpmath.log(64 / (mpmath.e ** 2 * mp(delta) ** 2))
    worst = _Worst()
    cases = [Hamiltonian(w, window, [(MonomialKey.of(None, {1: 2}, {1: 2}), 1.0)])]
    cases += [random_conserving_hamiltonian(rng, w, window, rng.randint(1, 8), max_deg=8) for _ in range(trials)]
    for H in cases:
        P = classify(H)
        plain_rho = weighted_norm(H, rho)
        up = plus_norm(P, rho + delta)
        down = weighted_norm(H, rho + delta)
        plus_rho = plus_norm(P, rho)
        worst.add(c_up + math.log(plain_rho) - math.log(up), {"direction": "plus<=plain", "terms": len(H)})
        worst.add(c_down + math.log(plus_rho) - math.log(down), {"direction": "plain<=plus", "terms": len(H)})
    return worst.verdict("norm_equivalence", {"sigma": sigma, "rho": rho, "delta": delta, "window": window}, seed)


def verify_vector_field_bound(trials: int = 300, sigma: float = 2.5, rho: float = 0.1, seed: int = 0,
                              window: int = 6) -> LemmaVerdict:
    """``|X_R|_{s,inf} <= exp{(100/rho) exp{(10/rho)^(1/(s-1))}} |R|_rho`` at random ``|q| < 1``."""
    if not 0 < rho < SQRT_BOUND:
        raise ValueError("rho must lie in (0, 3-2 sqrt 2)")
    w = SigmaWeight(sigma)
    rng = random.Random(seed)
    mp = mpmath.mpf
    const = (100 / mp(rho)) * mpmath.exp((10 / mp(rho)) ** (mp(1) / (sigma - 1)))
    i0 = ActionVector.torus(w, window)
    worst = _Worst()
    for _ in range(trials):
        H = random_conserving_hamiltonian(rng, w, window, rng.randint(1, 6))
        r = rng.uniform(0.1, 0.999)
        q = SequenceState({n: r * rng.uniform(0, 1) * math.exp(-w(n)) *
                           complex(math.cos(t := rng.uniform(0, 6.3)), math.sin(t))
                           for n in range(-window, window + 1)})
        assert seq_norm(q, w) < 1
        X = seq_norm(vector_field(H, q, i0), w)
        if X == 0:
            continue
        worst.add(const + math.log(weighted_norm(H, rho)) - math.log(X), {"field_norm": X})
    return worst.verdict("vector_field_bound", {"sigma": sigma, "rho": rho, "window": window}, seed)


SUITES = {
    "log_superadditivity": verify_log_superadditivity,
    "tame": verify_tame,
    "resonance_bound": verify_resonance_bound,
    "series_and_products": verify_series_and_products,
    "max_bounds": verify_max_bounds,
    "bracket_estimate": verify_bracket_estimate,
    "norm_equivalence": verify_norm_equivalence,
    "vector_field_bound": verify_vector_field_bound,
}
