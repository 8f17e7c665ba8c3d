"""Poisson brackets, Lie series and the quintic NLS Hamiltonian.

Bracket convention::

    {A, B} = i sum_j (dA/dq_j dB/dconj(q_j) - dA/dconj(q_j) dB/dq_j)

so that ``q_dot = i dH/dconj(q)`` and ``{N, M_akk'} = -i D M_akk'`` with
``D = sum (k_n - k'_n)(n^2 + V_n)``.  ``I_n(0)`` factors are constants.

Float Hamiltonians use a dense exponent matrix (columns ``a | k | kp`` over
the window) and numpy outer products per mode ``j``; exact Hamiltonians use
plain dictionaries.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import mpmath
import numpy as np

from . import backend as bk
from .hamiltonian import ActionVector, Hamiltonian, SequenceState, weighted_norm
from .keys import EMPTY, MonomialKey, mi_add, multi_index
from .weights import SigmaWeight

SQRT_BOUND = 3.0 - 2.0 * math.sqrt(2.0)
_PAIR_BLOCK = 1 << 21


class LieDivergence(ArithmeticError):
    """Lie-series term norms grew for three consecutive orders."""


@dataclass(frozen=True)
class BracketCaps:
    """Truncation parameters for brackets and Lie series.

    Parameters
    ----------
    degree_cap : int
        Largest monomial degree kept (at least 6).
    order_cap : int
        Highest Lie-series order ``K`` (at least 1).
    drop_threshold : float
        Float coefficients below ``drop_threshold * max|B|`` are pruned.
    threads : int
        Worker threads for the float bracket; results do not depend on it.
    """

    degree_cap: int = 12
    order_cap: int = 12
    drop_threshold: float = 1e-16
    threads: int = 1

    def __post_init__(self):
        if self.degree_cap < 6:
            raise ValueError(f"degree_cap must be >= 6, got {self.degree_cap}")
        if self.order_cap < 1:
            raise ValueError(f"order_cap must be >= 1, got {self.order_cap}")
        if not self.drop_threshold >= 0:
            raise ValueError("drop_threshold must be non-negative")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class BracketStats:
    """Counts of product terms generated, dropped by the degree cap and pruned."""

    generated: int = 0
    dropped: int = 0
    dropped_mass: float = 0.0
    pruned: int = 0

    def absorb(self, other: "BracketStats") -> None:
        self.generated += other.generated
        self.dropped += other.dropped
        self.dropped_mass += other.dropped_mass
        self.pruned += other.pruned


@dataclass(frozen=True)
class TailEstimate:
    last_term_norm: float
    geometric_ratio: float
    converged: bool
    orders: int = 0
    term_norms: tuple = field(default=(), repr=False)


# --------------------------------------------------------------------------
# dense float representation

class _Dense:
    """Exponent matrix ``E`` (rows: terms, columns ``a|k|kp``) and coefficients."""

    __slots__ = ("E", "c", "M")

    def __init__(self, E: np.ndarray, c: np.ndarray, M: int):
        self.E, self.c, self.M = E, c, M

    @property
    def W(self) -> int:
        return 2 * self.M + 1

    @classmethod
    def encode(cls, H: Hamiltonian) -> "_Dense":
        M = H.window
        W = 2 * M + 1
        E = np.zeros((len(H), 3 * W), dtype=np.int16)
        c = np.empty(len(H), dtype=np.complex128)
        for i, (key, v) in enumerate(H.items()):
            for off, part in ((0, key.a), (W, key.k), (2 * W, key.kp)):
                for n, e in part:
                    E[i, off + n + M] = e
            c[i] = v
        return cls(E, c, M)

    def decode(self) -> list:
        W, M = self.W, self.M
        rows, cols = np.nonzero(self.E)
        vals = self.E[rows, cols].tolist()
        rows, cols = rows.tolist(), cols.tolist()
        out = []
        ptr = 0
        nnz = len(rows)
        coefs = self.c.tolist()
        for i in range(self.E.shape[0]):
            parts = ([], [], [])
            while ptr < nnz and rows[ptr] == i:
                col = cols[ptr]
                parts[col // W].append((col % W - M, vals[ptr]))
                ptr += 1
            out.append((MonomialKey(tuple(parts[0]), tuple(parts[1]), tuple(parts[2])), coefs[i]))
        return out

    def degrees(self) -> np.ndarray:
        W = self.W
        return 2 * self.E[:, :W].sum(axis=1, dtype=np.int64) + self.E[:, W:].sum(axis=1, dtype=np.int64)


def _merge(E: np.ndarray, c: np.ndarray, rel: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Sum duplicate rows, drop zeros and tiny coefficients."""
    if E.shape[0] == 0:
        return E, c, 0
    E = np.ascontiguousarray(E)
    view = E.view(np.dtype((np.void, E.dtype.itemsize * E.shape[1]))).ravel()
    _, first, inv = np.unique(view, return_index=True, return_inverse=True)
    re = np.bincount(inv, weights=c.real)
    im = np.bincount(inv, weights=c.imag)
    cc = re + 1j * im
    EE = E[first]
    mag = np.abs(cc)
    keep = mag > 0
    if rel > 0 and keep.any():
        keep &= mag > rel * mag.max()
    pruned = int(np.count_nonzero(~keep & (mag > 0)))
    return EE[keep], cc[keep], pruned


def _pairs_for_mode(j: int, A: _Dense, dA, B: _Dense, dB, cap: int):
    W = A.W
    col_k, col_kp = W + j + A.M, 2 * W + j + A.M
    ia = np.nonzero((A.E[:, col_k] > 0) | (A.E[:, col_kp] > 0))[0]
    ib = np.nonzero((B.E[:, col_k] > 0) | (B.E[:, col_kp] > 0))[0]
    rows, coefs = [], []
    dropped = 0
    mass = 0.0
    generated = 0
    if ia.size == 0 or ib.size == 0:
        return rows, coefs, generated, dropped, mass
    ib = ib[np.argsort(dB[ib], kind="stable")]
    dB_sorted = dB[ib]
    kB = B.E[ib, col_k].astype(np.int64)
    kpB = B.E[ib, col_kp].astype(np.int64)
    dec = np.zeros(3 * W, dtype=np.int16)
    dec[col_k] = 1
    dec[col_kp] = 1
    for d in np.unique(dA[ia]):
        blockA = ia[dA[ia] == d]
        limit = int(np.searchsorted(dB_sorted, cap + 2 - d, side="right"))
        kA = A.E[blockA, col_k].astype(np.int64)
        kpA = A.E[blockA, col_kp].astype(np.int64)
        if limit < ib.size:
            # pairs beyond the degree cap with a nonzero bracket factor
            hA = _histogram(kA, kpA, np.abs(A.c[blockA]))
            hB = _histogram(kB[limit:], kpB[limit:], np.abs(B.c[ib[limit:]]))
            for (x, y), (na, sa) in hA.items():
                for (X, Y), (nb, sb) in hB.items():
                    f = x * Y - y * X
                    if f:
                        dropped += na * nb
                        mass += abs(f) * sa * sb
        if limit == 0:
            continue
        step = max(1, _PAIR_BLOCK // limit)
        for s in range(0, blockA.size, step):
            sub = blockA[s:s + step]
            f = (kA[s:s + step, None] * kpB[None, :limit]
                 - kpA[s:s + step, None] * kB[None, :limit])
            ii, ll = np.nonzero(f)
            if ii.size == 0:
                continue
            generated += ii.size
            E = A.E[sub[ii]] + B.E[ib[ll]] - dec
            cf = 1j * A.c[sub[ii]] * B.c[ib[ll]] * f[ii, ll]
            rows.append(E)
            coefs.append(cf)
    return rows, coefs, generated, dropped, mass


def _histogram(k: np.ndarray, kp: np.ndarray, mag: np.ndarray) -> dict:
    """``(k_j, k'_j) -> (count, sum |c|)``."""
    h: dict = {}
    for x, y, m in zip(k.tolist(), kp.tolist(), mag.tolist()):
        n, s = h.get((x, y), (0, 0.0))
        h[(x, y)] = (n + 1, s + m)
    return h


def _bracket_dense(A: _Dense, B: _Dense, caps: BracketCaps, stats: BracketStats) -> _Dense:
    W = A.W
    if A.E.shape[0] == 0 or B.E.shape[0] == 0:
        return _Dense(np.zeros((0, 3 * W), np.int16), np.zeros(0, np.complex128), A.M)
    dA, dB = A.degrees(), B.degrees()
    modes = range(-A.M, A.M + 1)
    job = lambda j: _pairs_for_mode(j, A, dA, B, dB, caps.degree_cap)
    if caps.threads > 1:
        with ThreadPoolExecutor(max_workers=caps.threads) as ex:
            parts = list(ex.map(job, modes))
    else:
        parts = [job(j) for j in modes]
    rows, coefs = [], []
    for r, c, g, d, m in parts:  # concatenated in mode order for determinism
        rows += r
        coefs += c
        stats.generated += g
        stats.dropped += d
        stats.dropped_mass += m
    if not rows:
        return _Dense(np.zeros((0, 3 * W), np.int16), np.zeros(0, np.complex128), A.M)
    E, c, pruned = _merge(np.concatenate(rows), np.concatenate(coefs), caps.drop_threshold)
    stats.pruned += pruned
    return _Dense(E, c, A.M)


def _add_dense(parts: list, rel: float) -> _Dense:
    M = parts[0].M
    E, c, _ = _merge(np.concatenate([p.E for p in parts]), np.concatenate([p.c for p in parts]), rel)
    return _Dense(E, c, M)


def _from_dense(D: _Dense, like: Hamiltonian) -> Hamiltonian:
    return like.like(D.decode())


# --------------------------------------------------------------------------
# exact representation

def _bracket_exact(H1: Hamiltonian, H2: Hamiltonian, caps: BracketCaps, stats: BracketStats) -> Hamiltonian:
    iu = bk.imag_unit(H1.backend)
    acc: dict = {}
    t2 = [(key, dict(key.k), dict(key.kp), key.degree, c) for key, c in H2.items()]
    for key1, c1 in H1.items():
        k1, kp1, d1 = dict(key1.k), dict(key1.kp), key1.degree
        modes1 = set(k1) | set(kp1)
        for key2, k2, kp2, d2, c2 in t2:
            for j in modes1:
                f = k1.get(j, 0) * kp2.get(j, 0) - kp1.get(j, 0) * k2.get(j, 0)
                if not f:
                    continue
                if d1 + d2 - 2 > caps.degree_cap:
                    stats.dropped += 1
                    stats.dropped_mass += abs(f) * bk.magnitude(c1) * bk.magnitude(c2)
                    continue
                stats.generated += 1
                k = _mi_sub(mi_add(key1.k, key2.k), j)
                kp = _mi_sub(mi_add(key1.kp, key2.kp), j)
                new = MonomialKey(mi_add(key1.a, key2.a), k, kp)
                v = iu * c1 * c2 * f
                acc[new] = acc[new] + v if new in acc else v
    return H1.like(acc.items())


def _mi_sub(x, j: int):
    return tuple((n, e - 1) if n == j else (n, e) for n, e in x if not (n == j and e == 1))


# --------------------------------------------------------------------------
# public operations

def bracket_with_stats(H1: Hamiltonian, H2: Hamiltonian, caps: BracketCaps | None = None):
    """:func:`poisson_bracket` plus the :class:`BracketStats` of the call."""
    caps = caps or BracketCaps()
    H1.compatible(H2)
    stats = BracketStats()
    if H1 == H2:
        # antisymmetry; float summation would otherwise leave round-off
        return H1.like(), stats
    if H1.backend == bk.FLOAT64:
        D = _bracket_dense(_Dense.encode(H1), _Dense.encode(H2), caps, stats)
        return _from_dense(D, H1), stats
    return _bracket_exact(H1, H2, caps, stats), stats


def poisson_bracket(H1: Hamiltonian, H2: Hamiltonian, caps: BracketCaps | None = None) -> Hamiltonian:
    """``{H1, H2}`` with terms above ``caps.degree_cap`` dropped.

    Raises
    ------
    BackendMismatch
        If the operands use different coefficient backends.
    ValueError
        If the windows differ.
    """
    return bracket_with_stats(H1, H2, caps)[0]


def lie_transform(H: Hamiltonian, F: Hamiltonian, caps: BracketCaps | None = None, *,
                  rho: float = 0.0, start: int = 0,
                  first_order: Hamiltonian | None = None, stats: BracketStats | None = None):
    """``H o Phi_F = sum_{n<=K} H^(n)/n!`` with ``H^(n) = {H^(n-1), F}``.

    Parameters
    ----------
    start : int
        Lowest order included in the returned sum (0 keeps ``H`` itself).
    first_order : Hamiltonian, optional
        Known value of ``{H, F}`` (used for exact homological cancellation).
    rho : float
        Norm index for the tail diagnostics.

    Returns
    -------
    (Hamiltonian, TailEstimate)

    Raises
    ------
    LieDivergence
        If term norms grow for three consecutive orders.
    """
    caps = caps or BracketCaps()
    H.compatible(F)
    stats = stats if stats is not None else BracketStats()
    norms: list[float] = []
    growth = 0
    if H.backend == bk.FLOAT64:
        Fd = _Dense.encode(F)
        term = _Dense.encode(H)
        total = [term] if start <= 0 else []
        fact = 1.0
        for n in range(1, caps.order_cap + 1):
            if n == 1 and first_order is not None:
                term = _Dense.encode(first_order)
            else:
                term = _bracket_dense(term, Fd, caps, stats)
            fact *= n
            if term.E.shape[0] == 0:
                norms.append(0.0)
                break
            if n >= start:
                total.append(_Dense(term.E, term.c / fact, term.M))
            norms.append(_dense_norm(term, H.weight, rho) / fact)
            growth = growth + 1 if len(norms) > 1 and norms[-1] > norms[-2] else 0
            if growth >= 3:
                raise LieDivergence(f"Lie series terms grew for 3 orders: {norms[-4:]}")
        if total:
            out = _from_dense(_add_dense(total, caps.drop_threshold), H)
        else:
            out = H.like()
    else:
        term = H
        acc = list(H.items()) if start <= 0 else []
        fact = 1
        for n in range(1, caps.order_cap + 1):
            if n == 1 and first_order is not None:
                term = first_order
            else:
                b, st = bracket_with_stats(term, F, caps)
                stats.absorb(st)
                term = b
            fact *= n
            if not term:
                norms.append(0.0)
                break
            inv = bk.coerce(1, H.backend) / bk.coerce(fact, H.backend)
            if n >= start:
                acc += [(k, c * inv) for k, c in term.items()]
            norms.append(weighted_norm(term, rho) / fact)
            growth = growth + 1 if len(norms) > 1 and norms[-1] > norms[-2] else 0
            if growth >= 3:
                raise LieDivergence(f"Lie series terms grew for 3 orders: {norms[-4:]}")
        out = H.like(acc)
    last = norms[-1] if norms else 0.0
    nz = [x for x in norms if x > 0]
    if last == 0.0:
        ratio = 0.0
    elif len(nz) >= 2:
        ratio = nz[-1] / nz[-2]
    else:
        ratio = math.inf
    tail = TailEstimate(last, ratio, ratio < 1.0, len(norms), tuple(norms))
    return out, tail


def _dense_norm(D: _Dense, w: SigmaWeight, rho: float) -> float:
    if D.E.shape[0] == 0:
        return 0.0
    W, M = D.W, D.M
    wv = np.array([w(n) for n in range(-M, M + 1)])
    mult = 2 * D.E[:, :W] + D.E[:, W:2 * W] + D.E[:, 2 * W:]
    total = mult @ wv
    # w is even and non-decreasing in |n|, so w(n_1*) is the largest present weight
    w_top = np.where(mult > 0, wv[None, :], 0.0).max(axis=1)
    expo = total - 2.0 * w_top
    return float(np.exp(np.max(np.log(np.abs(D.c)) - rho * expo)))


@dataclass(frozen=True)
class FlowVerdict:
    passed: bool
    log_lhs: mpmath.mpf
    lhs: mpmath.mpf

    def describe(self) -> str:
        return f"{'pass' if self.passed else 'fail'}: ln LHS = {mpmath.nstr(self.log_lhs, 8)}"


def flow_guard(F: Hamiltonian, rho: float, delta: float) -> FlowVerdict:
    """Smallness test ``(2e/d) exp{(2000/d) exp{(200/d)^(1/(s-1))}} |F|_{rho-d} < 1/2``.

    Evaluated in log space with mpmath since the constant overflows doubles
    for every realistic ``delta``.

    Raises
    ------
    ValueError
        Unless ``0 < delta < min(rho/4, 3 - 2 sqrt 2)``.
    """
    if not (0 < delta < min(rho / 4.0, SQRT_BOUND)):
        raise ValueError(f"delta={delta} outside (0, min(rho/4, 3-2*sqrt(2))) for rho={rho}")
    nF = weighted_norm(F, rho - delta)
    log_nF = mpmath.log(nF) if nF > 0 else mpmath.mpf("-inf")
    return flow_guard_log(log_nF, F.weight.sigma, delta)


def flow_guard_log(log_norm, sigma: float, delta: float) -> FlowVerdict:
    """:func:`flow_guard` given ``ln |F|_{rho-delta}`` directly (may be far below double range)."""
    if log_norm == mpmath.mpf("-inf"):
        return FlowVerdict(True, mpmath.mpf("-inf"), mpmath.mpf(0))
    d = mpmath.mpf(delta)
    inner = mpmath.exp((200 / d) ** (mpmath.mpf(1) / (sigma - 1)))
    log_lhs = mpmath.log(2 * mpmath.e / d) + (2000 / d) * inner + mpmath.mpf(log_norm)
    return FlowVerdict(bool(log_lhs < mpmath.log(0.5)), log_lhs, mpmath.exp(log_lhs))


def flow_guard_threshold(sigma: float, delta: float) -> mpmath.mpf:
    """``ln`` of the largest ``|F|_{rho-delta}`` accepted by :func:`flow_guard`."""
    d = mpmath.mpf(delta)
    inner = mpmath.exp((200 / d) ** (mpmath.mpf(1) / (sigma - 1)))
    return mpmath.log(0.5) - mpmath.log(2 * mpmath.e / d) - (2000 / d) * inner


# --------------------------------------------------------------------------
# evaluation

def _arrays(H: Hamiltonian, q: SequenceState, i0: ActionVector | None):
    M = H.window
    D = _Dense.encode(H.to_backend(bk.FLOAT64) if H.backend != bk.FLOAT64 else H)
    W = D.W
    modes = range(-M, M + 1)
    qv = np.array([complex(q[n]) for n in modes])
    iv = np.array([float(i0[n]) if i0 is not None else 0.0 for n in modes])
    return D, W, qv, iv


def _mono(E: np.ndarray, W: int, qv, iv) -> np.ndarray:
    A = E[:, :W].astype(np.int64)
    K = E[:, W:2 * W].astype(np.int64)
    Kp = E[:, 2 * W:].astype(np.int64)
    return (np.prod(iv[None, :] ** A, axis=1) * np.prod(qv[None, :] ** K, axis=1)
            * np.prod(np.conj(qv)[None, :] ** Kp, axis=1))


def evaluate(H: Hamiltonian, q: SequenceState, i0: ActionVector | None = None) -> complex:
    """``sum B I(0)^a q^k conj(q)^kp`` at ``q``."""
    if not H:
        return 0j
    D, W, qv, iv = _arrays(H, q, i0)
    return complex(np.sum(D.c * _mono(D.E, W, qv, iv)))


def vector_field(H: Hamiltonian, q: SequenceState, i0: ActionVector | None = None) -> SequenceState:
    """Components ``i dH/dconj(q_n)`` for every mode of the window."""
    M = H.window
    out = {n: 0j for n in range(-M, M + 1)}
    if not H:
        return SequenceState(out)
    D, W, qv, iv = _arrays(H, q, i0)
    for idx, n in enumerate(range(-M, M + 1)):
        col = 2 * W + idx
        rows = np.nonzero(D.E[:, col] > 0)[0]
        if rows.size == 0:
            continue
        E = D.E[rows].copy()
        factor = E[:, col].astype(np.float64)
        E[:, col] -= 1
        out[n] = complex(1j * np.sum(D.c[rows] * factor * _mono(E, W, qv, iv)))
    return SequenceState(out)


# --------------------------------------------------------------------------
# the NLS Hamiltonian

def nls_sextuples(window: int):
    """Ordered ``(n1, ..., n6)`` in ``[-M, M]`` with ``n1-n2+n3-n4+n5-n6 = 0``."""
    rng = range(-window, window + 1)
    for t in itertools.product(rng, repeat=5):
        n6 = t[0] - t[1] + t[2] - t[3] + t[4]
        if -window <= n6 <= window:
            yield t + (n6,)


def normal_form_hamiltonian(w: SigmaWeight, window: int, Vtilde: Mapping[int, float],
                            backend: str = bk.FLOAT64) -> Hamiltonian:
    """``N = sum (n^2 + V_n) |q_n|^2`` on the window."""
    terms = []
    for n in range(-window, window + 1):
        coef = bk.coerce(n * n, backend) + bk.coerce(Vtilde.get(n, 0), backend)
        terms.append((MonomialKey(EMPTY, ((n, 1),), ((n, 1),)), coef))
    return Hamiltonian(w, window, terms, backend)


def build_nls(window: int, eps, V: Mapping[int, float], w: SigmaWeight,
              backend: str = bk.FLOAT64) -> Hamiltonian:
    """Quadratic part plus ``eps`` times every ordered momentum-zero sextuple.

    Equivalent sextuples merge on their key, so the stored coefficient of a
    sextic monomial is ``eps`` times its number of orderings.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    for n, v in V.items():
        if not 0 <= float(v) <= 1:
            raise ValueError(f"V[{n}] = {v} outside [0, 1]")
    N = normal_form_hamiltonian(w, window, V, backend)
    e = bk.coerce(eps, backend)
    if not e:
        return N
    counts: dict = {}
    for t in nls_sextuples(window):
        key = MonomialKey(EMPTY, multi_index(((t[0], 1), (t[2], 1), (t[4], 1))),
                          multi_index(((t[1], 1), (t[3], 1), (t[5], 1))))
        counts[key] = counts.get(key, 0) + 1
    return N + N.like((k, e * c) for k, c in counts.items())
