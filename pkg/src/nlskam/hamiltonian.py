"""Sparse formal Hamiltonians over a finite Fourier-mode window."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from . import backend as bk
from .keys import MonomialKey, norm_exponent
from .weights import SigmaWeight

DEFAULT_DROP = 1e-16


class Hamiltonian:
    """Immutable sparse map ``MonomialKey -> coefficient``.

    Terms are kept in canonical order (degree, then lexicographic on the
    ``(mode, exponent)`` tuples of ``a``, ``k``, ``kp``).  Zero coefficients
    are never stored.

    Parameters
    ----------
    weight : SigmaWeight
    window : int
        Mode bound ``M``; every key must live in ``[-M, M]``.
    terms : mapping or iterable of (key, coefficient)
        Duplicate keys are summed.
    backend : {"float64", "rational"}
    """

    __slots__ = ("weight", "window", "backend", "_terms")

    def __init__(self, weight: SigmaWeight, window: int, terms=(), backend: str = bk.FLOAT64,
                 *, check_window: bool = True):
        self.weight = weight
        self.window = int(window)
        self.backend = bk.check(backend)
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[MonomialKey, object] = {}
        for key, c in items:
            if not isinstance(key, MonomialKey):
                key = MonomialKey(*key)
            c = bk.coerce(c, backend)
            if key in acc:
                acc[key] = acc[key] + c
            else:
                acc[key] = c
        if check_window:
            for key in acc:
                for n in key.support:
                    if abs(n) > self.window:
                        raise ValueError(f"mode {n} of {key} outside window {self.window}")
        self._terms = {k: acc[k] for k in sorted(acc, key=MonomialKey.sort_key) if acc[k]}

    # -- mapping protocol -------------------------------------------------
    @property
    def terms(self) -> Mapping[MonomialKey, object]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[MonomialKey]:
        return iter(self._terms)

    def items(self):
        return self._terms.items()

    def __getitem__(self, key) -> object:
        return self._terms.get(key, bk.zero(self.backend))

    def __contains__(self, key) -> bool:
        return key in self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __repr__(self) -> str:
        return f"Hamiltonian({len(self)} terms, window={self.window}, backend={self.backend})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Hamiltonian):
            return NotImplemented
        return (self.window == other.window and self.backend == other.backend
                and self._terms == other._terms)

    # -- construction helpers --------------------------------------------
    def like(self, terms=()) -> "Hamiltonian":
        """New Hamiltonian sharing weight, window and backend."""
        return Hamiltonian(self.weight, self.window, terms, self.backend, check_window=False)

    def compatible(self, other: "Hamiltonian") -> None:
        if self.backend != other.backend:
            raise bk.BackendMismatch(f"backend {self.backend} vs {other.backend}")
        if self.window != other.window:
            raise ValueError(f"window {self.window} vs {other.window}")

    def __add__(self, other: "Hamiltonian") -> "Hamiltonian":
        self.compatible(other)
        return self.like(list(self.items()) + list(other.items()))

    def __neg__(self) -> "Hamiltonian":
        return self.like((k, -c) for k, c in self.items())

    def __sub__(self, other: "Hamiltonian") -> "Hamiltonian":
        return self + (-other)

    def scale(self, factor) -> "Hamiltonian":
        f = bk.coerce(factor, self.backend)
        return self.like((k, f * c) for k, c in self.items())

    def filter(self, pred) -> "Hamiltonian":
        return self.like((k, c) for k, c in self.items() if pred(k))

    def max_abs(self) -> float:
        return max((bk.magnitude(c) for c in self._terms.values()), default=0.0)

    def pruned(self, rel: float = DEFAULT_DROP) -> "Hamiltonian":
        """Drop float coefficients with ``|B| <= rel * max|B|``.  Exact backends are untouched."""
        if self.backend != bk.FLOAT64 or not self._terms or rel <= 0:
            return self
        cut = rel * self.max_abs()
        return self.like((k, c) for k, c in self.items() if abs(c) > cut)

    def max_degree(self) -> int:
        return max((k.degree for k in self._terms), default=0)

    def to_backend(self, backend: str) -> "Hamiltonian":
        return Hamiltonian(self.weight, self.window, self.items(), backend, check_window=False)


@dataclass(frozen=True)
class ActionVector:
    """Initial actions ``I_n(0)``."""

    values: Mapping[int, float] = field(default_factory=dict)

    def __getitem__(self, n: int) -> float:
        return self.values.get(n, 0.0)

    @classmethod
    def torus(cls, w: SigmaWeight, window: int, factor: float = 0.75) -> "ActionVector":
        """``I_n(0) = factor * exp(-2 w(n))`` on ``[-window, window]``."""
        return cls({n: factor * math.exp(-2.0 * w(n)) for n in range(-window, window + 1)})

    def admissible(self, w: SigmaWeight) -> bool:
        """``I_n(0) <= exp(-2 w(n))`` for every stored mode."""
        return all(0 <= v <= math.exp(-2.0 * w(n)) * (1 + 1e-15) for n, v in self.values.items())

    def in_band(self, w: SigmaWeight) -> bool:
        """Torus membership: ``exp(-2 w(n)) / 4 <= I_n(0) <= 4 exp(-2 w(n))`` for every stored mode."""
        return all(0.25 * math.exp(-2.0 * w(n)) <= v <= 4.0 * math.exp(-2.0 * w(n))
                   for n, v in self.values.items())


@dataclass(frozen=True)
class SequenceState:
    """Finitely supported complex sequence ``(q_n)``."""

    q: Mapping[int, complex] = field(default_factory=dict)

    def __getitem__(self, n: int) -> complex:
        return self.q.get(n, 0j)

    def modes(self) -> list[int]:
        return sorted(self.q)

    @classmethod
    def on_torus(cls, i0: ActionVector, phases: Mapping[int, float]) -> "SequenceState":
        return cls({n: math.sqrt(i0[n]) * complex(math.cos(phases[n]), math.sin(phases[n]))
                    for n in i0.values})


def seq_norm(q: SequenceState, w: SigmaWeight) -> float:
    """``sup_n |q_n| exp(w(n))``; 0 for the empty state."""
    return max((abs(v) * math.exp(w(n)) for n, v in q.q.items()), default=0.0)


def log_weighted_terms(H: Hamiltonian, rho: float) -> Iterable[float]:
    for key, c in H.items():
        mag = bk.magnitude(c)
        yield math.log(mag) - rho * norm_exponent(key, H.weight)


def weighted_norm(H: Hamiltonian, rho: float) -> float:
    """``sup |B| / exp(rho (sum (2a+k+k') w(n) - 2 w(n_1*)))``; 0 when empty."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    best = max(log_weighted_terms(H, rho), default=-math.inf)
    return math.exp(best) if best > -math.inf else 0.0


def window_modes(window: int) -> np.ndarray:
    return np.arange(-window, window + 1)
