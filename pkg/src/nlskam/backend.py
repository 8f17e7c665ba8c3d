"""Coefficient arithmetic backends.

``float64`` stores Python complex numbers; ``rational`` stores exact Gaussian
rationals (sympy's ``QQ_I`` elements).  A Hamiltonian never mixes the two.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Number

from sympy.polys.domains import QQ, QQ_I

FLOAT64 = "float64"
RATIONAL = "rational"
BACKENDS = (FLOAT64, RATIONAL)


class BackendMismatch(TypeError):
    pass


def check(name: str) -> str:
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    return name


def _qq(x) -> object:
    if isinstance(x, Fraction):
        return QQ(x.numerator, x.denominator)
    if isinstance(x, int):
        return QQ(x)
    if isinstance(x, float):
        f = Fraction(x)
        return QQ(f.numerator, f.denominator)
    return QQ.convert(x)


def coerce(x, backend: str):
    """Convert ``x`` (int, Fraction, float, complex, QQ_I element) to ``backend``."""
    if backend == FLOAT64:
        if isinstance(x, Number):
            return complex(x)
        if hasattr(x, "x") and hasattr(x, "y"):
            return complex(float(QQ.to_sympy(x.x)), float(QQ.to_sympy(x.y)))
        return complex(x)
    if isinstance(x, complex):
        return QQ_I(_qq(x.real), _qq(x.imag))
    if isinstance(x, (int, Fraction, float)):
        return QQ_I(_qq(x), QQ(0))
    if hasattr(x, "x") and hasattr(x, "y"):
        return x
    return QQ_I.convert(x)


def zero(backend: str):
    return 0j if backend == FLOAT64 else QQ_I.zero


def imag_unit(backend: str):
    return 1j if backend == FLOAT64 else QQ_I(0, 1)


def is_zero(x) -> bool:
    return not x


def magnitude(x) -> float:
    """``|x|`` as a float."""
    if isinstance(x, (complex, float, int)):
        return abs(x)
    re, im = float(QQ.to_sympy(x.x)), float(QQ.to_sympy(x.y))
    return math.hypot(re, im)


def real_imag(x) -> tuple:
    """Real and imaginary parts: floats for float64, Fractions for rational."""
    if isinstance(x, complex):
        return x.real, x.imag
    return (Fraction(int(QQ.numer(x.x)), int(QQ.denom(x.x))),
            Fraction(int(QQ.numer(x.y)), int(QQ.denom(x.y))))


def from_real_imag(re, im, backend: str):
    if backend == FLOAT64:
        return complex(float(re), float(im))
    return QQ_I(_qq(Fraction(re)), _qq(Fraction(im)))


def backend_of(x) -> str:
    return FLOAT64 if isinstance(x, (complex, float, int)) else RATIONAL
