"""Sequence weights ln^sigma(max(c, |n|)) and the cutoff constant c(sigma)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache


def compute_c_sigma(sigma: float) -> float:
    """Cutoff constant making ln^s(x+y) <= ln^s(x) + ln^s(y)/2 for c <= y <= x.

    Returns ``max(c1, c2)`` with ``c1 = exp(sigma 2^sigma ln 2)`` and
    ``c2 = exp((sigma 2^sigma c*)^(1/sigma))``, ``c* = 2((sigma-1)/e)^(sigma-1)``.
    Returns ``inf`` once the value exceeds the double range (sigma > ~7.5).
    """
    if not sigma > 1:
        raise ValueError(f"c(sigma) needs sigma > 1, got {sigma}")
    c_star = 2.0 * ((sigma - 1.0) / math.e) ** (sigma - 1.0)
    try:
        c1 = math.exp(sigma * 2.0**sigma * math.log(2.0))
        c2 = math.exp((sigma * 2.0**sigma * c_star) ** (1.0 / sigma))
    except OverflowError:
        return math.inf
    return max(c1, c2)


@dataclass(frozen=True)
class SigmaWeight:
    """The weight ``w(n) = ln^sigma(max(c, |n|))``.

    Parameters
    ----------
    sigma : float
        Exponent, must exceed 2.
    c_override : float or None
        Replacement for the (astronomically large) true cutoff c(sigma).
        Defaults to ``e`` so that weights stay informative on small windows;
        pass ``None`` to use the true c(sigma).
    """

    sigma: float
    c_override: float | None = math.e
    c_sigma: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sigma > 2:
            raise ValueError(f"sigma must exceed 2, got {self.sigma}")
        if self.c_override is not None and self.c_override < math.e:
            raise ValueError(f"c_override must be >= e, got {self.c_override}")
        object.__setattr__(self, "c_sigma", compute_c_sigma(self.sigma))

    @classmethod
    def true(cls, sigma: float) -> "SigmaWeight":
        """Weight using the true cutoff c(sigma)."""
        return cls(sigma, c_override=None)

    @property
    def c(self) -> float:
        """Effective cutoff actually used by :meth:`__call__`."""
        return self.c_sigma if self.c_override is None else self.c_override

    def __call__(self, n: int) -> float:
        return _weight(abs(int(n)), self.sigma, self.c)

    def floor(self, n: int) -> float:
        """``max(c, |n|)``."""
        return max(self.c, float(abs(n)))


@lru_cache(maxsize=65536)
def _weight(absn: int, sigma: float, c: float) -> float:
    return math.log(max(c, float(absn))) ** sigma


def weight(n: int, w: SigmaWeight) -> float:
    """``ln^sigma(max(c, |n|))`` for the weight ``w``."""
    return w(n)
