"""Multi-indices and monomial keys.

A monomial ``M_{akk'} = prod_n I_n(0)^{a_n} q_n^{k_n} conj(q_n)^{k'_n}`` is
identified by the triple ``(a, k, kp)``.  Each multi-index is stored as a
tuple of ``(mode, exponent)`` pairs sorted by mode with no zero exponents,
which makes keys hashable and gives a natural total order.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Mapping, NamedTuple

from .weights import SigmaWeight

MultiIndex = tuple  # tuple[tuple[int, int], ...]

EMPTY: MultiIndex = ()


def multi_index(exps: Mapping[int, int] | Iterable[tuple[int, int]] | None = None) -> MultiIndex:
    """Canonical multi-index from a mode -> exponent mapping (zeros dropped)."""
    if exps is None:
        return EMPTY
    items = exps.items() if isinstance(exps, Mapping) else exps
    acc: dict[int, int] = {}
    for n, e in items:
        e = int(e)
        if e < 0:
            raise ValueError(f"negative exponent {e} at mode {n}")
        if e:
            acc[int(n)] = acc.get(int(n), 0) + e
    return tuple(sorted(acc.items()))


def mi_add(x: MultiIndex, y: MultiIndex) -> MultiIndex:
    if not x:
        return y
    if not y:
        return x
    acc = dict(x)
    for n, e in y:
        acc[n] = acc.get(n, 0) + e
    return tuple(sorted(acc.items()))


def mi_get(x: MultiIndex, n: int) -> int:
    for m, e in x:
        if m == n:
            return e
    return 0


def mi_total(x: MultiIndex) -> int:
    return sum(e for _, e in x)


class MonomialKey(NamedTuple):
    """Exponent triple ``(a, k, kp)`` of ``I(0)^a q^k conj(q)^kp``."""

    a: MultiIndex = EMPTY
    k: MultiIndex = EMPTY
    kp: MultiIndex = EMPTY

    @classmethod
    def of(cls, a=None, k=None, kp=None) -> "MonomialKey":
        return cls(multi_index(a), multi_index(k), multi_index(kp))

    @property
    def degree(self) -> int:
        return 2 * mi_total(self.a) + mi_total(self.k) + mi_total(self.kp)

    @property
    def mass(self) -> int:
        return mi_total(self.k) - mi_total(self.kp)

    @property
    def momentum(self) -> int:
        return sum(n * e for n, e in self.k) - sum(n * e for n, e in self.kp)

    @property
    def conserving(self) -> bool:
        return self.mass == 0 and self.momentum == 0

    @property
    def support(self) -> frozenset[int]:
        return frozenset(n for part in self for n, _ in part)

    @property
    def n1_star(self) -> int | None:
        """Largest ``|n|`` in the support, ``None`` for the constant key."""
        s = self.support
        return max(abs(n) for n in s) if s else None

    @property
    def resonant(self) -> bool:
        """True when ``k == kp`` (pure action dependence)."""
        return self.k == self.kp

    def sort_key(self):
        return (self.degree, self.a, self.k, self.kp)

    def __str__(self) -> str:
        parts = []
        for label, mi in (("I", self.a), ("q", self.k), ("qb", self.kp)):
            parts += [f"{label}{n}^{e}" if e > 1 else f"{label}{n}" for n, e in mi]
        return "*".join(parts) if parts else "1"


def multiplicities(key: MonomialKey) -> Counter:
    """``|n| -> sum over +-n of (2 a_n + k_n + k'_n)``."""
    c: Counter = Counter()
    for n, e in key.a:
        c[abs(n)] += 2 * e
    for n, e in key.k:
        c[abs(n)] += e
    for n, e in key.kp:
        c[abs(n)] += e
    return c


def rearrangement(key: MonomialKey, w: SigmaWeight | None = None) -> list[tuple[int, int]]:
    """Decreasing rearrangement of the key's modes as ``(|n|, multiplicity)``.

    Each ``|n|`` is repeated ``2a_n + k_n + k'_n`` times (contributions of
    ``n`` and ``-n`` are summed).  ``w`` is accepted for interface symmetry
    with :func:`tail_weight`; the list itself does not depend on it.
    """
    c = multiplicities(key)
    return sorted(((n, m) for n, m in c.items() if m), reverse=True)


def expanded(key: MonomialKey) -> list[int]:
    """The rearrangement with multiplicities unrolled: ``n_1* >= n_2* >= ...``."""
    return [n for n, m in rearrangement(key) for _ in range(m)]


def tail_weight(key: MonomialKey, w: SigmaWeight, start: int = 3) -> float:
    """``sum_{i >= start} w(n_i*)`` (1-based ``i``)."""
    return sum(w(n) for n in expanded(key)[start - 1:])


def weighted_degree(key: MonomialKey, w: SigmaWeight) -> float:
    """``sum_n (2a_n + k_n + k'_n) w(n)``."""
    return sum(m * w(n) for n, m in multiplicities(key).items())


def norm_exponent(key: MonomialKey, w: SigmaWeight, extra_modes: Iterable[int] = ()) -> float:
    """Exponent in the weighted norm denominators.

    ``sum (2a+k+k') w(n) + 2 sum_{m in extra} w(m) - 2 w(n_1*)`` where
    ``n_1*`` also ranges over the extra (J-factor) modes.  The constant key
    without extra modes has exponent 0.
    """
    extra = list(extra_modes)
    e = weighted_degree(key, w) + 2.0 * sum(w(m) for m in extra)
    tops = [abs(m) for m in extra]
    if key.n1_star is not None:
        tops.append(key.n1_star)
    if tops:
        e -= 2.0 * w(max(tops))
    return e


def tame_defect(key: MonomialKey, w: SigmaWeight) -> float:
    """``sum (2a+k+k') w(n) - 2 w(n_1*) - (1/2) sum_{i>=3} w(n_i*)``.

    Non-negative for every momentum-conserving key when the weight uses the
    true cutoff c(sigma).
    """
    if key.momentum != 0:
        raise ValueError(f"tame_defect needs a momentum-conserving key, got momentum {key.momentum}")
    ns = expanded(key)
    if not ns:
        return 0.0
    return weighted_degree(key, w) - 2.0 * w(ns[0]) - 0.5 * sum(w(n) for n in ns[2:])
