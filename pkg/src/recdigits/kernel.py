"""Kernel coefficients rho_n, their residue polynomials, and decay envelopes.

rho_n = -(1/2 pi i) * integral over |z|=1 of z^(n-1)/f(z) dz.  At a root alpha
of multiplicity k+1 the residue of z^(n-1)/f is q(n) * alpha^n where q is a
polynomial of degree <= k; with G(z) = (z-alpha)^(k+1)/f(z),

    q(X) = sum_i binom(X-1, i) * alpha^(-1-i) * [t^(k-i)] G(alpha+t).

For n >= 1 only the small roots lie inside the circle; for n <= D-1 the
residue sum over all roots vanishes, so rho_n equals the sum over large roots.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from ._mp import workprec, bits_for, log2_abs, fmt
from .algebra import CompanionSpec

RESIDUE_GUARD = 64


def _series_inv_power(delta, k: int, order: int) -> list:
    """Taylor coefficients of (delta + t)^-(k+1) up to t^order."""
    out = []
    base = 1 / delta ** (k + 1)
    for m in range(order + 1):
        out.append(base * ((-1) ** m * math.comb(k + m, m)) / delta ** m)
    return out


def _series_mul(a: list, b: list, order: int) -> list:
    out = [0] * (order + 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            if i + j <= order:
                out[i + j] += x * y
    return out


def _falling_binomial_coeffs(i: int) -> list[Fraction]:
    """Monomial coefficients of binom(X-1, i) = prod_{m=1..i} (X-m) / i!."""
    poly = [Fraction(1)]
    for m in range(1, i + 1):
        nxt = [Fraction(0)] * (len(poly) + 1)
        for e, c in enumerate(poly):
            nxt[e + 1] += c
            nxt[e] -= m * c
        poly = nxt
    fact = math.factorial(i)
    return [c / fact for c in poly]


def residue_poly(alpha, others: list, k: int) -> list:
    """Monomial coefficients c_0..c_k of q with Res(z^(n-1)/f, alpha) = q(n) alpha^n.

    Works with exact (Fraction) or mpmath inputs.
    """
    G = [1] + [0] * k
    for beta in others:
        G = _series_mul(G, _series_inv_power(alpha - beta, k, k), k)
    coeffs = [0] * (k + 1)
    for i in range(k + 1):
        w = G[k - i] / alpha ** (1 + i)
        for e, c in enumerate(_falling_binomial_coeffs(i)):
            if c:
                coeffs[e] += w * (c if isinstance(alpha, Fraction) else mpmath.mpf(c.numerator) / c.denominator)
    return coeffs


@dataclass(frozen=True)
class HVector:
    """Residue polynomials for every root, indexed like ``spec.roots``."""

    spec: CompanionSpec
    coeffs: tuple  # coeffs[j][l] = c_{j,l}
    bits: int
    exact: bool
    rel_err: object  # relative error bound on each coefficient

    @property
    def large(self) -> tuple:
        return self.coeffs[: self.spec.p]

    def q(self, j: int, n):
        acc = 0
        for c in reversed(self.coeffs[j]):
            acc = acc * n + c
        return acc


def h_vector(spec: CompanionSpec, bits: int = 256) -> HVector:
    """Residue polynomials q_j at roughly ``bits`` bits of relative accuracy."""
    if spec.splits:
        return spec.cache(("hvec", "exact"), lambda: _h_exact(spec))
    key = ("hvec", 1 << max(7, (int(bits) - 1).bit_length()))
    return spec.cache(key, lambda: _h_numeric(spec, key[1]))


def _h_exact(spec: CompanionSpec) -> HVector:
    roots = [Fraction(v) for v in spec.int_roots]
    out = []
    for j, a in enumerate(roots):
        out.append(tuple(residue_poly(a, roots[:j] + roots[j + 1:], spec.k)))
    return HVector(spec=spec, coeffs=tuple(out), bits=0, exact=True, rel_err=0)


def _h_numeric(spec: CompanionSpec, bits: int) -> HVector:
    rs = spec.roots
    # sensitivity of q_j to the roots: (k+1) * sum 1/|alpha_j - alpha_i| scaled by |alpha_j|
    with workprec(128):
        cond = 1.0
        for j, a in enumerate(rs.roots):
            s = sum(abs(a) / abs(a - b) for i, b in enumerate(rs.roots) if i != j)
            cond = max(cond, float((spec.k + 1) * (s + 2)))
    guard = RESIDUE_GUARD + int(math.log2(cond)) + 1
    wbits = bits + guard
    roots = spec.roots_at(wbits).roots
    with workprec(wbits):
        out = []
        for j, a in enumerate(roots):
            others = list(roots[:j]) + list(roots[j + 1:])
            cs = residue_poly(a, others, spec.k)
            if rs.real[j]:
                cs = [mpmath.mpf(mpmath.re(c)) for c in cs]
            out.append(cs)
        # exact conjugate symmetry
        for j in range(len(out)):
            pj = rs.partner(j)
            if pj > j:
                out[pj] = [mpmath.conj(c) for c in out[j]]
        rel = mpmath.mpf(2) ** (-bits)
    return HVector(spec=spec, coeffs=tuple(tuple(c) for c in out), bits=bits, exact=False, rel_err=rel)


# decay envelope

@dataclass(frozen=True)
class Decay:
    C: float
    delta: float

    def bound(self, n: int) -> float:
        return self.C * self.delta ** abs(n)

    def tail(self, w: int) -> float:
        """Upper bound of sum_{|n| > w} on one side: C delta^(w+1) / (1-delta)."""
        return self.C * self.delta ** (w + 1) / (1 - self.delta)

    def window(self, B: int, target) -> int:
        """Smallest w with B*C*delta^(w+1)/(1-delta) <= target/2."""
        if target <= 0:
            raise ValueError("target must be positive")
        lt = float(mpmath.log(mpmath.mpf(target))) if float(target) < 1e-300 else math.log(float(target))
        need = (lt - math.log(2 * B * self.C / (1 - self.delta))) / math.log(self.delta) - 1
        return max(0, int(math.ceil(need)))


def decay_bound(spec: CompanionSpec) -> Decay:
    """Certified (C, delta) with |rho_n| <= C * delta^|n| for every n."""
    return spec.cache(("decay",), lambda: _decay(spec))


def _decay(spec: CompanionSpec) -> Decay:
    h = h_vector(spec, 128)
    rs = spec.roots
    with workprec(128):
        d0 = mpmath.mpf(0)
        for j, a in enumerate(rs.roots):
            r = rs.errors[j]
            if j < spec.p:
                d0 = max(d0, 1 / (abs(a) - r))
            else:
                d0 = max(d0, abs(a) + r)
        if spec.k == 0:
            delta = d0 * (1 + mpmath.mpf(2) ** -60)
            weights = [mpmath.mpf(1)]
        else:
            # n^l d0^n <= M_l delta^n with delta = d0^(3/4), M_l = (l / (e ln(delta/d0)))^l
            delta = d0 ** mpmath.mpf(0.75)
            lk = mpmath.log(delta / d0)
            weights = [mpmath.mpf(1)] + [(l / (mpmath.e * lk)) ** l for l in range(1, spec.k + 1)]
        inflate = 1 + (h.rel_err if not h.exact else 0) + mpmath.mpf(2) ** -100

        def side(js):
            tot = mpmath.mpf(0)
            for j in js:
                tot += sum(abs(mpmath.mpmathify(c)) * w for c, w in zip(h.coeffs[j], weights))
            return tot * inflate

        C = max(side(range(spec.p)), side(range(spec.p, spec.d)))
        return Decay(C=float(C) * (1 + 1e-12), delta=float(delta) * (1 + 1e-12))


# rho values

def _rho_terms(spec: CompanionSpec, h: HVector, n: int, branch: int, powers=None):
    """Sum over the branch's roots of q_j(n) alpha_j^n, returned as a real plus a magnitude."""
    rs = spec.roots
    js = range(spec.p) if branch == 2 else range(spec.p, spec.d)
    if h.exact:
        tot = Fraction(0)
        for j in js:
            a = Fraction(spec.int_roots[j])
            tot += h.q(j, n) * a ** n
        return (tot if branch == 2 else -tot), 0
    roots = spec.roots_at(h.bits + 32).roots
    tot = mpmath.mpf(0)
    mag = mpmath.mpf(0)
    for j in js:
        pj = rs.partner(j)
        if pj < j:
            continue
        a = roots[j] if powers is None else None
        term = h.q(j, n) * (a ** n if powers is None else powers[j])
        if pj != j:
            tot += 2 * mpmath.re(term)
            mag += 2 * abs(term)
        else:
            tot += mpmath.re(term)
            mag += abs(term)
    return (tot if branch == 2 else -tot), mag


def rho_branch(spec: CompanionSpec, n: int, branch: int, target_error=1e-40):
    """rho_n from a single residue branch: 1 (small roots, n >= 1) or 2 (large roots, n <= D-1)."""
    if branch == 1 and n < 1:
        raise ValueError("branch 1 needs n >= 1")
    if branch == 2 and n > spec.D - 1:
        raise ValueError("branch 2 needs n <= D-1")
    if branch == 1 and spec.p == spec.d:
        return (Fraction(0) if spec.splits else mpmath.mpf(0)), 0
    bits = bits_for(target_error) + 2 * (spec.k + 1) * int(math.log2(abs(n) + 2)) + 16
    h = h_vector(spec, bits)
    if h.exact:
        v, _ = _rho_terms(spec, h, n, branch)
        return v, 0
    with workprec(h.bits + 32):
        v, mag = _rho_terms(spec, h, n, branch)
        err = mag * (h.rel_err * (abs(n) + 4) * 4 + mpmath.mpf(2) ** -(h.bits))
    return v, err


def rho(spec: CompanionSpec, n: int, target_error=1e-40):
    """(value, error bound) of rho_n.

    Exact when every root lies outside the unit circle: then rho_n = 0 for
    n >= 1 and the recurrence sum_l A_l rho_(n+l) = -[n = 0] runs downwards
    in rationals.
    """
    if spec.p == spec.d:
        if n >= 1:
            return Fraction(0), 0
        return _rho_rational(spec, -n), 0
    return rho_branch(spec, n, 1 if n >= 1 else 2, target_error)


class _RationalRho:
    """rho_(-t) = N_t / A_0^(t+1) with integer numerators, grown on demand."""

    def __init__(self, spec: CompanionSpec):
        self.A = [int(a) for a in spec.A]
        self.nums: list[int] = []
        self.lock = threading.Lock()

    def _grow(self, t: int) -> None:
        with self.lock:
            A = self.A
            A0 = A[0]
            D = len(A) - 1
            nums = self.nums
            while len(nums) <= t:
                m = len(nums)
                # A0^(m+1) rho_(-m) = -([m = 0] A0^m + sum_l A_l N_(m-l) A0^(l-1))
                acc = A0 ** m if m == 0 else 0
                for l in range(1, min(D, m) + 1):
                    acc += A[l] * nums[m - l] * A0 ** (l - 1)
                nums.append(-acc)

    def get(self, t: int) -> Fraction:
        if t >= len(self.nums):
            self._grow(t)
        return Fraction(self.nums[t], self.A[0] ** (t + 1))

    def dot(self, digits) -> Fraction:
        """sum_t digits[t] * rho_(-t), exactly."""
        T = len(digits)
        if T == 0:
            return Fraction(0)
        if T > len(self.nums):
            self._grow(T - 1)
        A0 = self.A[0]
        acc = 0
        for t in range(T):
            acc = acc * A0 + int(digits[t]) * self.nums[t]
        return Fraction(acc, A0 ** T)


def _rational_table(spec: CompanionSpec) -> _RationalRho:
    return spec.cache(("rho-rational",), lambda: _RationalRho(spec))


def _rho_rational(spec: CompanionSpec, t: int) -> Fraction:
    return _rational_table(spec).get(t)


def rho_suffix_exact(spec: CompanionSpec, digits) -> Fraction:
    """sum_t digits[t] * rho_(-t) in rationals; requires every root to be large."""
    if spec.p != spec.d:
        raise ValueError("exact suffix sums need all roots outside the unit circle")
    return _rational_table(spec).dot(digits)


def rho_quadrature_oracle(spec: CompanionSpec, n: int, grid_points: int = 4096, bits: int = 192):
    """Trapezoidal rule for -(1/2 pi i) * contour integral of z^(n-1)/f on |z|=1."""
    if grid_points < 64 or grid_points & (grid_points - 1):
        raise ValueError("grid_points must be a power of two >= 64")
    key = ("quad", grid_points, bits)

    def build():
        with workprec(bits):
            w = [mpmath.expjpi(mpmath.mpf(2 * i) / grid_points) for i in range(grid_points)]
            inv_f = [1 / sum(c * z ** e for e, c in enumerate(spec.A)) for z in w]
        return w, inv_f

    w, inv_f = spec.cache(key, build)
    with workprec(bits):
        tot = mpmath.mpc(0)
        for i in range(grid_points):
            tot += w[(i * n) % grid_points] * inv_f[i]
        return mpmath.re(-tot / grid_points)


class RhoTable:
    """rho_n over a window [-left, right] at fixed accuracy, extended lazily.

    Reads are safe from several threads; extension takes a lock and swaps in
    a larger immutable table.
    """

    def __init__(self, spec: CompanionSpec, target_error=1e-40, left: int = 0, right: int = 0):
        self.spec = spec
        self.target_error = target_error
        self._lock = threading.Lock()
        self._lo = 1
        self._hi = 0
        self._vals: dict = {}
        self._errs: dict = {}
        self.ensure(-left, right)

    def ensure(self, lo: int, hi: int) -> None:
        with self._lock:
            if lo >= self._lo and hi <= self._hi:
                return
            vals = dict(self._vals)
            errs = dict(self._errs)
            for n in range(lo, hi + 1):
                if n not in vals:
                    v, e = rho(self.spec, n, self.target_error)
                    vals[n] = v
                    errs[n] = e
            self._vals, self._errs = vals, errs
            self._lo = min(self._lo, lo) if self._hi >= self._lo else lo
            self._hi = max(self._hi, hi)

    def get(self, n: int):
        if n not in self._vals:
            self.ensure(min(n, self._lo), max(n, self._hi))
        return self._vals[n], self._errs[n]

    def floats(self, lo: int, hi: int) -> np.ndarray:
        self.ensure(lo, hi)
        return np.array([float(self._vals[n]) for n in range(lo, hi + 1)], dtype=np.float64)

    def to_csv(self, lo: int, hi: int) -> str:
        self.ensure(lo, hi)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["n", "value", "err"])
        for n in range(lo, hi + 1):
            wr.writerow([n, fmt(self._vals[n], 30), fmt(self._errs[n], 5)])
        return buf.getvalue()


def rho_table(spec: CompanionSpec, target_error=1e-40) -> RhoTable:
    """Shared table per (spec, accuracy)."""
    e = max(-int(log2_abs(target_error)), 1)
    e = 1 << (e - 1).bit_length()
    return spec.cache(("rhotable", e), lambda: RhoTable(spec, mpmath.mpf(2) ** -e))


def rho_floats(spec: CompanionSpec, lo: int, hi: int) -> np.ndarray:
    """float64 copy of rho over [lo, hi] (values accurate far below 1 ulp)."""
    key = ("rhofloat", lo, hi)
    return spec.cache(key, lambda: rho_table(spec, 1e-40).floats(lo, hi))
