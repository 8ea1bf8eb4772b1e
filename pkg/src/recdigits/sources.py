"""Seed digit sources: Champernowne-style values in integer bases and random initial values."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import mpmath

from ._mp import workprec
from .algebra import CompanionSpec
from .digits import DigitStream, GeneratorStream, ShiftedStream, psi_stream
from .orbit import InitialValue, support_bound, shift_value

VARIANTS = ("balanced", "words", "classic")
LOOKAHEAD = 4096


def _word_blocks(b: int, variant: str):
    """Yield (L, first integer, count, digits per item, copies) blocks in order."""
    L = 1
    while True:
        if variant == "classic":
            yield L, b ** (L - 1), (b - 1) * b ** (L - 1), L, 1
        else:
            yield L, 0, b ** L, L, 2 if variant == "balanced" else 1
        L += 1


def expansion_digits(b: int, lo: int, hi: int, variant: str = "balanced") -> np.ndarray:
    """Base-b digits d_lo .. d_{hi-1} of the Champernowne-style value.

    words:    every word of length 1, 2, ... in radix order
    balanced: as words, each word followed by its complement d -> b-1-d
    classic:  the base-b numerals 1, 2, 3, ...
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    out = np.zeros(max(0, hi - lo), dtype=np.int64)
    start = 0
    for L, first, count, width, copies in _word_blocks(b, variant):
        size = count * width * copies
        a, c = max(lo, start), min(hi, start + size)
        if c > a:
            pos = np.arange(a - start, c - start, dtype=np.int64)
            item = pos // (width * copies)
            comp = (pos // width) % copies
            t = pos % width
            word = first + item
            digit = (word // (b ** (width - 1 - t))) % b
            digit = np.where(comp == 1, b - 1 - digit, digit)
            out[a - lo: c - lo] = digit
        start += size
        if start >= hi:
            break
    return out


def canonical_from_expansion(b: int, d: np.ndarray, lookahead: np.ndarray) -> np.ndarray:
    """Canonical signed digits from a base-b expansion.

    With h_m = [0.d_m d_(m+1)... >= 1/2], the rounded e-values satisfy
    s_m = d_m + h_(m+1) - b h_m.  ``lookahead`` holds the digits after ``d``.
    """
    full = np.concatenate([d, lookahead])
    if b % 2 == 0:
        h = (full >= b // 2).astype(np.int64)
    else:
        c = (b - 1) // 2
        diff = np.nonzero(full != c)[0]
        idx = np.searchsorted(diff, np.arange(full.size))
        if idx[d.size] >= diff.size:
            raise ValueError("lookahead too short to decide rounding")
        h = np.zeros(full.size, dtype=np.int64)
        ok = idx < diff.size
        h[ok] = (full[diff[idx[ok]]] > c).astype(np.int64)
    n = d.size
    return d + h[1: n + 1] - b * h[:n]


def champernowne_stream(spec: CompanionSpec, variant: str = "balanced") -> DigitStream:
    """Canonical digit stream of the Champernowne-style value in base spec.base."""
    if not spec.is_integer_base or spec.base < 2:
        raise ValueError("Champernowne seeds need P = X - b with b >= 2 and k = 0")
    b = spec.base

    def fn(lo, hi):
        look = LOOKAHEAD
        while True:
            d = expansion_digits(b, lo, hi + look, variant)
            try:
                return canonical_from_expansion(b, d[: hi - lo], d[hi - lo:])
            except ValueError:
                look *= 4

    # the value lies in [0, 1/b), so nothing sits at negative indices
    return GeneratorStream(spec, fn, 0, None)


def champernowne_value(spec: CompanionSpec, digits: int = 400, variant: str = "balanced") -> InitialValue:
    """The seed value truncated to ``digits`` base-b digits (exact rational)."""
    b = spec.base
    d = expansion_digits(b, 0, digits, variant)
    num = 0
    for x in d:
        num = num * b + int(x)
    return InitialValue(spec, ((Fraction(num, b ** digits),),))


def _odd_denominator(spec: CompanionSpec, bits: int = 256) -> int:
    """A prime power above 2^bits sharing no factor with any integer root."""
    roots = [abs(int(v)) for v in spec.int_roots if v is not None]
    q = 3
    while any(r % q == 0 for r in roots):
        q += 2
        while any(q % f == 0 for f in range(3, int(q ** 0.5) + 1, 2)):
            q += 2
    return q ** (bits // q.bit_length() + 1)


def random_value(spec: CompanionSpec, seed: int, scale: float = 1.0) -> InitialValue:
    """Initial value with coordinates drawn uniformly from [-scale, scale] (real and imaginary parts).

    When every large root is an integer, binary floating point coordinates
    would make the orbit integral after a few dozen steps, so the coordinates
    are rationals with a large denominator prime to the roots instead.
    """
    rng = np.random.default_rng(seed)
    rs = spec.roots
    coords = []
    if spec.large_integer:
        Q = _odd_denominator(spec)
        span = int(Q * scale)
        for j in range(spec.r1 + spec.r2):
            row = []
            for _ in range(spec.k + 1):
                words = rng.integers(0, 1 << 62, size=Q.bit_length() // 62 + 2)
                raw = 0
                for w in words:
                    raw = (raw << 62) | int(w)
                row.append(Fraction(raw % (2 * span + 1) - span, Q))
            coords.append(tuple(row))
        return InitialValue(spec, tuple(coords))
    with workprec(128):
        for j in range(spec.r1 + spec.r2):
            row = []
            for _ in range(spec.k + 1):
                re = mpmath.mpf(float(rng.uniform(-scale, scale)))
                if rs.real[j]:
                    row.append(re)
                else:
                    row.append(mpmath.mpc(re, float(rng.uniform(-scale, scale))))
            coords.append(tuple(row))
    return InitialValue(spec, tuple(coords))


def random_seed_stream(spec: CompanionSpec, seed: int, target_error=1e-30):
    """(stream, value): canonical digits of a random value moved to support n >= 0.

    Psi(tau^-R g) is Psi(g) shifted right by R, so the shift is applied to the
    stream and the value is reported as tau^-R(g).
    """
    g = random_value(spec, seed)
    R = support_bound(g)
    s = psi_stream(g, target_error)
    if R:
        return ShiftedStream(s, -R), shift_value(g, -R)
    return s, g
