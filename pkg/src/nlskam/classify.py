"""Split a perturbation into J-free, J-linear and J-quadratic parts.

With ``I_n = |q_n|^2`` and ``J_n = I_n - I_n(0)`` every monomial
``I(0)^alpha q^kappa conj(q)^kappa'`` is rewritten as
``I(0)^alpha * prod_n I_n^{b_n} * q^l conj(q)^l'`` with ``b = min(kappa, kappa')``
and then ``prod (I_n(0) + J_n)^{b_n}`` is telescoped in increasing mode
order.  The J-free and J-linear pieces have disjoint ``k``/``kp`` supports;
the J-quadratic remainder keeps the leftover ``I_n`` powers inside its
inner monomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from . import backend as bk
from .hamiltonian import ActionVector, Hamiltonian
from .keys import MonomialKey, mi_add, multi_index, norm_exponent
from .weights import SigmaWeight

R0, R1, R2 = "R0", "R1", "R2"


def _acc(d: dict, key, c) -> None:
    if key in d:
        d[key] = d[key] + c
    else:
        d[key] = c


@dataclass(frozen=True)
class ClassifiedPerturbation:
    """The three classes of a perturbation.

    ``r0`` maps inner keys to coefficients, ``r1`` maps ``(m, key)`` (one
    explicit factor ``J_m``) and ``r2`` maps ``((m1, m2), key)`` with
    ``m1 <= m2`` (factor ``J_m1 J_m2``).
    """

    weight: SigmaWeight
    window: int
    backend: str = bk.FLOAT64
    r0: Mapping = field(default_factory=dict)
    r1: Mapping = field(default_factory=dict)
    r2: Mapping = field(default_factory=dict)
    i0: ActionVector | None = None

    def __len__(self) -> int:
        return len(self.r0) + len(self.r1) + len(self.r2)

    def __bool__(self) -> bool:
        return len(self) > 0

    def entries(self) -> Iterator[tuple[str, tuple, MonomialKey, object]]:
        """Yield ``(class, j_modes, inner_key, coefficient)`` in a fixed order."""
        for key in sorted(self.r0, key=MonomialKey.sort_key):
            yield R0, (), key, self.r0[key]
        for m, key in sorted(self.r1, key=lambda t: (t[0], t[1].sort_key())):
            yield R1, (m,), key, self.r1[(m, key)]
        for js, key in sorted(self.r2, key=lambda t: (t[0], t[1].sort_key())):
            yield R2, js, key, self.r2[(js, key)]

    def part(self, cls: str) -> "ClassifiedPerturbation":
        """Copy keeping only one class."""
        return ClassifiedPerturbation(
            self.weight, self.window, self.backend,
            dict(self.r0) if cls == R0 else {},
            dict(self.r1) if cls == R1 else {},
            dict(self.r2) if cls == R2 else {},
            self.i0,
        )

    def replace(self, r0=None, r1=None, r2=None) -> "ClassifiedPerturbation":
        return ClassifiedPerturbation(
            self.weight, self.window, self.backend,
            self.r0 if r0 is None else r0,
            self.r1 if r1 is None else r1,
            self.r2 if r2 is None else r2,
            self.i0,
        )

    def __add__(self, other: "ClassifiedPerturbation") -> "ClassifiedPerturbation":
        if self.backend != other.backend:
            raise bk.BackendMismatch(f"backend {self.backend} vs {other.backend}")
        out = []
        for a, b in ((self.r0, other.r0), (self.r1, other.r1), (self.r2, other.r2)):
            d = dict(a)
            for key, c in b.items():
                _acc(d, key, c)
            out.append({k: v for k, v in d.items() if v})
        return self.replace(*out)

    def scale(self, factor) -> "ClassifiedPerturbation":
        f = bk.coerce(factor, self.backend)
        return self.replace(*({k: f * c for k, c in d.items()} for d in (self.r0, self.r1, self.r2)))


def _split(kappa, kappa_p):
    """Return ``(b, l, lp)`` as dicts."""
    k, kp = dict(kappa), dict(kappa_p)
    b = {n: min(e, kp[n]) for n, e in k.items() if n in kp}
    l = {n: e - b.get(n, 0) for n, e in k.items()}
    lp = {n: e - b.get(n, 0) for n, e in kp.items()}
    return b, l, lp


def _key(alpha, a_extra: dict, l: dict, lp: dict, absorbed: dict) -> MonomialKey:
    k = dict(l)
    kp = dict(lp)
    for n, e in absorbed.items():
        k[n] = k.get(n, 0) + e
        kp[n] = kp.get(n, 0) + e
    return MonomialKey(mi_add(alpha, multi_index(a_extra)), multi_index(k), multi_index(kp))


def classify(H: Hamiltonian, i0: ActionVector | None = None) -> ClassifiedPerturbation:
    """Telescoping R0/R1/R2 split of ``H`` (exact inverse: :func:`reconstruct`)."""
    r0: dict = {}
    r1: dict = {}
    r2: dict = {}
    for key, B in H.items():
        b, l, lp = _split(key.k, key.kp)
        modes = sorted(n for n, e in b.items() if e)
        _acc(r0, _key(key.a, b, l, lp, {}), B)
        for m in modes:
            a1 = dict(b)
            a1[m] -= 1
            _acc(r1, (m, _key(key.a, a1, l, lp, {})), B * b[m])
        for idx, m in enumerate(modes):
            lower = {n: b[n] for n in modes[:idx]}
            upper = {n: b[n] for n in modes[idx + 1:]}
            # same-mode remainder J_m^2 * sum_u (u+1) I_m(0)^u I_m^{b_m-2-u}
            for u in range(b[m] - 1):
                a2 = dict(lower)
                a2[m] = u
                absorbed = dict(upper)
                absorbed[m] = b[m] - 2 - u
                _acc(r2, ((m, m), _key(key.a, a2, l, lp, absorbed)), B * (u + 1))
            # cross remainder J_m1 J_m with m1 < m
            for m1 in modes[:idx]:
                for r in range(b[m]):
                    a2 = dict(lower)
                    a2[m1] = b[m1] - 1
                    a2[m] = r
                    absorbed = dict(upper)
                    absorbed[m] = b[m] - 1 - r
                    _acc(r2, ((m1, m), _key(key.a, a2, l, lp, absorbed)), B * b[m1])
    clean = lambda d: {k: v for k, v in d.items() if v}
    return ClassifiedPerturbation(H.weight, H.window, H.backend, clean(r0), clean(r1), clean(r2), i0)


def _times_j(terms: list, m: int) -> list:
    """Multiply each ``(key, c)`` by ``J_m = q_m conj(q_m) - I_m(0)``."""
    out = []
    e_m = ((m, 1),)
    for k, v in terms:
        out.append((MonomialKey(k.a, mi_add(k.k, e_m), mi_add(k.kp, e_m)), v))
        out.append((MonomialKey(mi_add(k.a, e_m), k.k, k.kp), -v))
    return out


def reconstruct(P: ClassifiedPerturbation) -> Hamiltonian:
    """Substitute ``J_n = q_n conj(q_n) - I_n(0)`` (``I_n(0)`` kept formal) and merge."""
    terms: list = list(P.r0.items())
    for (m, key), c in P.r1.items():
        terms += _times_j([(key, c)], m)
    for ((m1, m2), key), c in P.r2.items():
        terms += _times_j(_times_j([(key, c)], m1), m2)
    return Hamiltonian(P.weight, P.window, terms, P.backend, check_window=False)


def class_norm(P: ClassifiedPerturbation, cls: str, rho: float) -> float:
    """Plus-norm of one class; J-modes enter the exponent and ``n_1*``."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    w = P.weight
    best = -math.inf
    src = {R0: (((), k, c) for k, c in P.r0.items()),
           R1: (((m,), k, c) for (m, k), c in P.r1.items()),
           R2: ((js, k, c) for (js, k), c in P.r2.items())}[cls]
    for js, key, c in src:
        v = math.log(bk.magnitude(c)) - rho * norm_exponent(key, w, js)
        if v > best:
            best = v
    return math.exp(best) if best > -math.inf else 0.0


def plus_norm(P: ClassifiedPerturbation, rho: float) -> float:
    """Max of the three class-wise plus-norms."""
    return max(class_norm(P, c, rho) for c in (R0, R1, R2))


def class_norms(P: ClassifiedPerturbation, rho: float) -> dict[str, float]:
    return {c: class_norm(P, c, rho) for c in (R0, R1, R2)}
