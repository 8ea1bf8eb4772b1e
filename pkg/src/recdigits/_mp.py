"""Precision bookkeeping on top of mpmath.

mpmath keeps its working precision in a process-wide context, so every
high-precision section goes through :func:`workprec`, which serialises
access with a re-entrant lock.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from fractions import Fraction

import mpmath
from mpmath import mp

_LOCK = threading.RLock()

# guard bits added on top of every derived precision
GUARD = 32
MAX_BITS = 1 << 20


@contextmanager
def workprec(bits: int):
    bits = int(max(53, min(bits, MAX_BITS)))
    with _LOCK:
        old = mp.prec
        mp.prec = bits
        try:
            yield bits
        finally:
            mp.prec = old


def log2_abs(x) -> float:
    """log2 |x| for ints, Fractions, floats and mpmath numbers (-inf at 0)."""
    if isinstance(x, Fraction):
        if x == 0:
            return -math.inf
        return log2_abs(x.numerator) - log2_abs(x.denominator)
    if isinstance(x, int):
        if x == 0:
            return -math.inf
        n = abs(x)
        b = n.bit_length()
        if b < 1000:
            return math.log2(n)
        return b - 1 + math.log2(n >> (b - 53)) - 52
    if x == 0:
        return -math.inf
    with workprec(64):
        return float(mpmath.log(abs(mpmath.mpmathify(x)), 2))


def bits_for(target, scale_log2: float = 0.0) -> int:
    """Working precision giving absolute error ``target`` on quantities of size 2**scale_log2."""
    t = log2_abs(target)
    if not math.isfinite(t):
        raise ValueError("target error must be positive")
    return int(math.ceil(max(scale_log2, 0.0) - t)) + GUARD


def to_mpf(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpmathify(x)


def to_mpc(x):
    if isinstance(x, Fraction):
        return mpmath.mpc(to_mpf(x))
    return mpmath.mpc(mpmath.mpmathify(x))


def is_exact(x) -> bool:
    return isinstance(x, (int, Fraction))


def as_fraction(x) -> Fraction:
    """Exact rational value of an int, Fraction, float or finite mpf."""
    if isinstance(x, (int, Fraction, float)):
        return Fraction(x)
    if isinstance(x, mpmath.mpf):
        sign, man, exp, _ = x._mpf_
        v = Fraction(int(man)) * (Fraction(2) ** int(exp))
        return -v if sign else v
    raise TypeError(f"no exact rational value for {type(x).__name__}")


def is_rational_value(x) -> bool:
    return isinstance(x, (int, Fraction)) or (isinstance(x, mpmath.mpf) and mpmath.isfinite(x))


def fmt(x, digits: int = 40) -> str:
    """Decimal string used in every report."""
    if isinstance(x, int):
        return str(x)
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return str(x.numerator)
        with workprec(int(digits * 3.33) + 16):
            return mpmath.nstr(to_mpf(x), digits)
    with workprec(int(digits * 3.33) + 16):
        return mpmath.nstr(mpmath.mpmathify(x), digits)


def parse_number(text: str):
    """Exact rational from "p/q" or a decimal string."""
    text = text.strip()
    return Fraction(text)
