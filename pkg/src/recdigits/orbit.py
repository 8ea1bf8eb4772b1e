"""Initial values, orbit evaluation x_n(g), rounding split, the shift tau and canonical digits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath

from ._mp import workprec, bits_for, log2_abs, is_exact, to_mpf, fmt, as_fraction, is_rational_value
from .algebra import CompanionSpec
from .errors import UndecidableRounding, PrecisionExhausted

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class UnitSplit:
    u: int
    e: object
    err: object = 0


def split_unit(x, err=0) -> UnitSplit:
    """x = u + e with u = floor(x + 1/2) and e in [-1/2, 1/2)."""
    if isinstance(x, float):
        x = Fraction(x)
    if is_exact(x):
        u = math.floor(x + HALF)
        return UnitSplit(u, x - u, 0)
    x = mpmath.mpmathify(x)
    if not isinstance(x, mpmath.mpf):
        raise TypeError("split_unit expects a real value")
    sign, man, exp, bc = x._mpf_
    if man == 0 or exp >= 0:
        # integer valued (or zero): e = 0 unless the error bound reaches 1/2
        if err and err >= 0.5:
            raise UndecidableRounding("error bound too large")
        u = int(x)
        return UnitSplit(u, mpmath.mpf(0), err)
    s = -exp
    X = -man if sign else man
    num = 2 * X + (1 << s)
    u = num >> (s + 1)
    r = num - (u << (s + 1))
    with workprec(64):
        frac = mpmath.ldexp(mpmath.mpf(r), -(s + 1))
        if err and (frac <= err or 1 - frac <= err):
            raise UndecidableRounding(f"value {mpmath.nstr(x, 20)} within {mpmath.nstr(mpmath.mpf(err), 3)} of a half-integer")
    rest = X - (u << s)
    with workprec(max(64, abs(rest).bit_length() + 8)):
        e = mpmath.ldexp(mpmath.mpf(rest), -s)
    return UnitSplit(int(u), e, err)


def _shift_poly(c: Sequence, s):
    """Coefficients of c(X + s)."""
    k = len(c) - 1
    out = [0] * (k + 1)
    for i, ci in enumerate(c):
        if not ci:
            continue
        for e in range(i + 1):
            out[e] += ci * math.comb(i, e) * s ** (i - e)
    return out


def _peval(c: Sequence, x):
    acc = 0
    for ci in reversed(c):
        acc = acc * x + ci
    return acc


@dataclass(frozen=True, eq=False)
class InitialValue:
    """Element of the parameter space, stored by its free coordinates.

    ``coords[j]`` holds the k+1 ascending coefficients of g_j for the free
    large roots (real roots, then one representative per conjugate pair);
    the conjugate partners are implied.  ``err`` bounds every coordinate.
    """

    spec: CompanionSpec
    coords: tuple
    err: object = 0

    def __post_init__(self):
        spec = self.spec
        nfree = spec.r1 + spec.r2
        if len(self.coords) != nfree or any(len(c) != spec.k + 1 for c in self.coords):
            raise ValueError(f"expected {nfree} polynomials with {spec.k + 1} coefficients")
        for j in range(spec.r1):
            for c in self.coords[j]:
                if isinstance(c, complex) or (isinstance(c, mpmath.mpc) and c.imag != 0):
                    raise ValueError("coordinates of real roots must be real")

    @classmethod
    def constant(cls, spec: CompanionSpec, value) -> "InitialValue":
        zero = [0] * spec.k
        return cls(spec, tuple(tuple([value] + zero) for _ in range(spec.r1 + spec.r2)))

    @classmethod
    def zero(cls, spec: CompanionSpec) -> "InitialValue":
        return cls.constant(spec, 0)

    @property
    def exact(self) -> bool:
        return self.spec.large_integer and self.err == 0 and all(
            is_rational_value(c) for cs in self.coords for c in cs)

    def is_zero(self) -> bool:
        return self.err == 0 and all(c == 0 for cs in self.coords for c in cs)

    def full(self) -> list:
        """(g_1, ..., g_p) including the conjugate partners."""
        spec = self.spec
        out = [list(c) for c in self.coords]
        for j in range(spec.r2):
            out.append([mpmath.conj(c) for c in self.coords[spec.r1 + j]])
        return out

    def flat(self) -> list:
        return [c for cs in self.coords for c in cs]

    def distance(self, other: "InitialValue"):
        with workprec(256):
            return max((abs(mpmath.mpmathify(to_mpf(a) if is_exact(a) else a) - mpmath.mpmathify(to_mpf(b) if is_exact(b) else b))
                        for a, b in zip(self.flat(), other.flat())), default=mpmath.mpf(0))

    def to_text(self, digits: int = 40, exact: bool = True) -> str:
        """Coordinates joined by ";".  Rationals stay exact unless ``exact`` is False."""
        parts = []
        for j, cs in enumerate(self.coords):
            for c in cs:
                if isinstance(c, Fraction):
                    parts.append(str(c) if exact else fmt(c, digits))
                elif isinstance(c, int):
                    parts.append(str(c))
                elif j >= self.spec.r1:
                    z = mpmath.mpc(c)
                    parts.append(f"{fmt(z.real, digits)},{fmt(z.imag, digits)}")
                else:
                    parts.append(fmt(c, digits))
        return ";".join(parts)

    @classmethod
    def from_text(cls, spec: CompanionSpec, text: str) -> "InitialValue":
        """Parse "c;c;..." with each c "p/q", a decimal, or "re,im" for pair coordinates.

        A single value is broadcast as the constant term of every free polynomial.
        """
        items = [t.strip() for t in text.split(";") if t.strip()]
        nfree = spec.r1 + spec.r2
        vals = []
        for t in items:
            if "," in t:
                re_s, im_s = t.split(",")
                vals.append((Fraction(re_s), Fraction(im_s)))
            else:
                vals.append(Fraction(t))
        if len(vals) == 1 and nfree * (spec.k + 1) != 1:
            v = vals[0]
            if isinstance(v, tuple):
                raise ValueError("a single complex value cannot be broadcast")
            return cls.constant(spec, v)
        if len(vals) != nfree * (spec.k + 1):
            raise ValueError(f"expected {nfree * (spec.k + 1)} coordinates, got {len(vals)}")
        coords = []
        for j in range(nfree):
            row = []
            for i in range(spec.k + 1):
                v = vals[j * (spec.k + 1) + i]
                if isinstance(v, tuple):
                    if j < spec.r1:
                        raise ValueError("real root coordinate given as complex")
                    with workprec(256):
                        v = mpmath.mpc(to_mpf(v[0]), to_mpf(v[1]))
                elif j >= spec.r1:
                    with workprec(256):
                        v = mpmath.mpc(to_mpf(v))
                row.append(v)
            coords.append(tuple(row))
        return cls(spec, tuple(coords))


# magnitudes

def _coord_abs(c) -> float:
    if is_exact(c):
        return abs(float(c)) if abs(c) < 1e300 else math.inf
    with workprec(64):
        return float(abs(mpmath.mpmathify(c)))


def magnitude_log2(g: InitialValue, n: int) -> float:
    """log2 of sum_j |g_j(n)| |alpha_j|^n over all large roots (pairs counted twice)."""
    spec = g.spec
    with workprec(64):
        tot = mpmath.mpf(0)
        ge = mpmath.mpf(g.err)
        for j, cs in enumerate(g.coords):
            a = sum(abs(to_mpf(c) if is_exact(c) else mpmath.mpmathify(c)) * abs(n) ** i for i, c in enumerate(cs))
            a += ge * sum(abs(n) ** i for i in range(spec.k + 1))
            if a == 0:
                continue
            w = 2 if j >= spec.r1 else 1
            tot += w * a * abs(spec.roots.roots[j]) ** n
        if tot == 0:
            return -math.inf
        return float(mpmath.log(tot, 2))


def _working_bits(g: InitialValue, lo: int, hi: int, target) -> int:
    mag = max(magnitude_log2(g, lo), magnitude_log2(g, hi), 0.0)
    span = max(abs(lo), abs(hi)) + 2
    return bits_for(target, mag) + 2 * int(math.log2(span)) + 8


# orbit values

def _exact_values(g: InitialValue, lo: int, hi: int) -> list:
    spec = g.spec
    out = []
    roots = [Fraction(spec.int_roots[j]) for j in range(spec.r1)]
    pows = [a ** lo for a in roots]
    coords = [[as_fraction(c) for c in cs] for cs in g.coords]
    for n in range(lo, hi):
        tot = Fraction(0)
        for j, cs in enumerate(coords):
            q = _peval(cs, n)
            if q:
                tot += q * pows[j]
        out.append(tot)
        pows = [p * a for p, a in zip(pows, roots)]
    return out


def orbit_values(g: InitialValue, lo: int, hi: int, target=1e-30):
    """x_n(g) for lo <= n < hi with a common absolute error bound.

    Returns (values, err).  Exact Fractions and err 0 in the exact-rational mode.
    """
    if hi <= lo:
        return [], 0
    if g.exact:
        return _exact_values(g, lo, hi), 0
    spec = g.spec
    if g.is_zero():
        return [mpmath.mpf(0)] * (hi - lo), 0
    bits = _working_bits(g, lo, hi, target)
    rs = spec.roots_at(bits + 16)
    nfree = spec.r1 + spec.r2
    with workprec(bits):
        alphas = [rs.roots[j] for j in range(nfree)]
        coords = [[to_mpf(c) if is_exact(c) else c for c in cs] for cs in g.coords]
        pows = [a ** lo for a in alphas]
        vals = []
        for n in range(lo, hi):
            tot = mpmath.mpf(0)
            for j in range(nfree):
                term = _peval(coords[j], n) * pows[j]
                tot += term if j < spec.r1 else 2 * mpmath.re(term)
                pows[j] = pows[j] * alphas[j]
            vals.append(tot)
        two = mpmath.mpf(2)
        mag = two ** max(magnitude_log2(g, lo), magnitude_log2(g, hi - 1))
        span = max(abs(lo), abs(hi)) + 2
        root_err = max(rs.errors[:nfree]) if nfree else 0
        rel = two ** (-bits + 4) * span + root_err * span * (spec.k + 2) * 4
        err = mag * rel
        if g.err:
            gsum = mpmath.mpf(0)
            for j in range(nfree):
                la = mpmath.log(abs(alphas[j]), 2)
                w = 2 if j >= spec.r1 else 1
                gsum += w * max(sum(abs(n) ** i for i in range(spec.k + 1)) * two ** (n * la) for n in (lo, hi - 1))
            err += mpmath.mpf(g.err) * gsum
    return vals, err


def exact_x0(g: InitialValue):
    """x_0(g) as a Fraction when every constant coefficient is rational, else None.

    x_0 is the sum of the constant terms (twice the real part for a conjugate
    pair), so it is exact even when the roots are irrational.
    """
    spec = g.spec
    if g.err:
        return None
    tot = Fraction(0)
    for j, cs in enumerate(g.coords):
        c = cs[0]
        if j >= spec.r1:
            c = mpmath.mpmathify(c)
            re = c.real if isinstance(c, mpmath.mpc) else c
            if not is_rational_value(re):
                return None
            tot += 2 * as_fraction(re)
        else:
            if not is_rational_value(c):
                return None
            tot += as_fraction(c)
    return tot


def eval_x(g: InitialValue, n: int, target_error=1e-30):
    """(x_n(g), error bound)."""
    vals, err = orbit_values(g, n, n + 1, target_error)
    return vals[0], err


def shift_value(g: InitialValue, steps: int, bits: int | None = None) -> InitialValue:
    """tau^steps: g_j(X) -> alpha_j^steps * g_j(X + steps)."""
    if steps == 0:
        return g
    spec = g.spec
    nfree = spec.r1 + spec.r2
    if g.exact:
        coords = []
        for j, cs in enumerate(g.coords):
            a = Fraction(spec.int_roots[j]) ** steps
            coords.append(tuple(a * c for c in _shift_poly([as_fraction(x) for x in cs], steps)))
        return InitialValue(spec, tuple(coords))
    if bits is None:
        bits = 256 + int(2 * abs(steps) * max(1.0, spec.max_abs_log2()))
    rs = spec.roots_at(bits + 16)
    with workprec(bits):
        coords = []
        growth = mpmath.mpf(0)
        for j, cs in enumerate(g.coords):
            a = rs.roots[j] ** steps
            sh = _shift_poly([to_mpf(c) if is_exact(c) else c for c in cs], steps)
            row = [a * c for c in sh]
            if j < spec.r1:
                row = [mpmath.mpf(mpmath.re(c)) for c in row]
            else:
                row = [mpmath.mpc(c) for c in row]
            coords.append(tuple(row))
            growth = max(growth, abs(a) * (abs(steps) + 1) ** spec.k * 2 ** spec.k)
        mag = max((abs(mpmath.mpmathify(c)) for cs in coords for c in cs), default=mpmath.mpf(0))
        err = mpmath.mpf(g.err) * growth + mag * mpmath.mpf(2) ** (-bits + 8) * (abs(steps) + 2)
    return InitialValue(spec, tuple(coords), err)


# canonical digits

def _psi_cap_bits(spec: CompanionSpec, n: int) -> int:
    return 1 + math.ceil((abs(n) + spec.D) * max(spec.max_abs_log2(), 1.0)) + 256


def rounding_units(g: InitialValue, lo: int, hi: int, target_error=1e-30) -> list[int]:
    """u(x_n(g)) for lo <= n < hi, escalating precision near half-integers."""
    if g.exact:
        return [math.floor(x + HALF) for x in _exact_values(g, lo, hi)]
    vals, err = orbit_values(g, lo, hi, target_error)
    out = []
    bad = []
    for i, x in enumerate(vals):
        try:
            out.append(split_unit(x, err).u)
        except UndecidableRounding:
            out.append(None)
            bad.append(lo + i)
    for n in bad:
        t = mpmath.mpf(target_error)
        while True:
            t = t * mpmath.mpf(2) ** -64
            bits = _working_bits(g, n, n, t)
            try:
                v, e = orbit_values(g, n, n + 1, t)
                out[n - lo] = split_unit(v[0], e).u
                break
            except UndecidableRounding:
                if bits > _psi_cap_bits(g.spec, n) + bits_for(target_error):
                    raise UndecidableRounding(f"x_{n} is numerically a half-integer", index=n)
    return out


def psi_digits(g: InitialValue, m_lo: int, m_hi: int, target_error=1e-30) -> list[int]:
    """Canonical digits s_m = sum_l A_l u(x_{m+l}) for m_lo <= m <= m_hi."""
    spec = g.spec
    if m_hi < m_lo:
        raise ValueError("empty range")
    try:
        us = rounding_units(g, m_lo, m_hi + spec.D + 1, target_error)
    except UndecidableRounding as exc:
        idx = exc.index if exc.index is not None else m_lo
        raise UndecidableRounding(str(exc), index=max(m_lo, idx - spec.D)) from None
    A = spec.A
    out = []
    for m in range(m_hi - m_lo + 1):
        out.append(sum(a * us[m + l] for l, a in enumerate(A) if a))
    for m, s in enumerate(out):
        if abs(s) > spec.B:
            raise PrecisionExhausted(f"digit {s} at index {m_lo + m} outside the alphabet")
    return out


def support_bound(g: InitialValue) -> int:
    """R with s_m(g) = 0 for every m < -R, from sum_j |g_j(n)| |alpha_j|^n < 1/2."""
    spec = g.spec
    if g.is_zero():
        return 0
    exact = g.exact
    nfree = spec.r1 + spec.r2
    with workprec(96):
        if exact:
            absc = [[abs(as_fraction(c)) for c in cs] for cs in g.coords]
            alphas = [abs(Fraction(spec.int_roots[j])) for j in range(nfree)]
        else:
            absc = [[abs(mpmath.mpmathify(to_mpf(c) if is_exact(c) else c)) + mpmath.mpf(g.err) for c in cs]
                    for cs in g.coords]
            alphas = [abs(spec.roots.roots[j]) - spec.roots.errors[j] for j in range(nfree)]
        weights = [1 if j < spec.r1 else 2 for j in range(nfree)]
        half = HALF if exact else mpmath.mpf(0.5)

        def bound(n):
            tot = 0
            for j in range(nfree):
                q = sum(c * abs(n) ** i for i, c in enumerate(absc[j]))
                if q:
                    tot += weights[j] * q * (alphas[j] ** n if exact else mpmath.power(alphas[j], n))
            if not exact:
                tot *= 1 + mpmath.mpf(2) ** -60
            return tot

        # beyond T the bound is decreasing as n -> -infinity
        T = 0
        if spec.k:
            T = max(math.ceil(spec.k / math.log(float(a))) for a in alphas) + 1
        n = 0
        while not (n <= -T and bound(n) < half):
            n -= 1
        while bound(n + 1) < half and n + 1 <= spec.D:
            n += 1
    return max(0, spec.D - 1 - n)
