"""Companion polynomial validation and certified root data.

Roots are located with a companion-matrix eigenvalue estimate, polished by
Newton iteration in mpmath and certified with Weierstrass inclusion disks:
if the disks D(z_i, d*|P(z_i)/prod_{j!=i}(z_i-z_j)|) are pairwise disjoint,
each contains exactly one root.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from ._mp import workprec, log2_abs, fmt
from .errors import (
    AmbiguousRealness,
    ConstantPolynomial,
    MultipleRoots,
    NotMonic,
    PrecisionExhausted,
    UnitCircleRoot,
    ZeroConstantTerm,
)

# cap for the assumption checks (unit circle, realness, separation)
DECISION_CAP_BITS = 4096
DEFAULT_BITS = 256


# exact integer / rational polynomial helpers (ascending coefficient lists)

def poly_mul(a: Sequence[int], b: Sequence[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def poly_pow(a: Sequence[int], e: int) -> list[int]:
    out = [1]
    for _ in range(e):
        out = poly_mul(out, a)
    return out


def poly_deriv(a: Sequence) -> list:
    return [i * a[i] for i in range(1, len(a))]


def _trim(a: list) -> list:
    while a and a[-1] == 0:
        a.pop()
    return a


def poly_gcd(a: Sequence[int], b: Sequence[int]) -> list[Fraction]:
    """Monic gcd over Q."""
    u = _trim([Fraction(x) for x in a])
    v = _trim([Fraction(x) for x in b])
    while v:
        r = list(u)
        while len(r) >= len(v) and r:
            c = r[-1] / v[-1]
            shift = len(r) - len(v)
            for i, y in enumerate(v):
                r[i + shift] -= c * y
            _trim(r)
        u, v = v, r
    if not u:
        return []
    lead = u[-1]
    return [x / lead for x in u]


def poly_eval(a: Sequence, x):
    acc = 0
    for c in reversed(a):
        acc = acc * x + c
    return acc


def parse_poly(text: str) -> list[int]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty polynomial")
    return [int(p) for p in parts]


# roots

@dataclass(frozen=True)
class RootSet:
    """Certified roots in canonical order.

    Order: real large roots ascending, large pair representatives (Im > 0) by
    ascending argument, their conjugates in the same order, then the small
    roots with the same scheme.
    """

    roots: tuple
    errors: tuple
    real: tuple
    p: int
    r1: int
    r2: int
    prec: int
    s1: int = 0  # real small roots
    s2: int = 0  # small conjugate pairs

    @property
    def d(self) -> int:
        return len(self.roots)

    def is_large(self, j: int) -> bool:
        return j < self.p

    def partner(self, j: int) -> int:
        """Index of the conjugate of root j (j itself when real)."""
        if self.real[j]:
            return j
        if j < self.p:
            lo = self.r1
            if j < lo + self.r2:
                return j + self.r2
            return j - self.r2
        lo = self.p + self.s1
        if j < lo + self.s2:
            return j + self.s2
        return j - self.s2

    def free_indices(self) -> list[int]:
        """Large roots carrying independent initial-value coordinates."""
        return list(range(self.r1 + self.r2))

    def max_error(self):
        return max(self.errors) if self.errors else mpmath.mpf(0)


def _newton(coeffs_mp, dcoeffs_mp, z, bits, iters):
    tol = mpmath.mpf(2) ** (-bits + 8)
    for _ in range(iters):
        fz = poly_eval(coeffs_mp, z)
        dz = poly_eval(dcoeffs_mp, z)
        if dz == 0:
            break
        step = fz / dz
        z = z - step
        if abs(step) <= tol * max(1, abs(z)):
            fz = poly_eval(coeffs_mp, z)
            dz = poly_eval(dcoeffs_mp, z)
            if dz != 0:
                z = z - fz / dz
            break
    return z


def _inclusion_radii(coeffs: Sequence[int], zs: list, bits: int) -> list:
    """Weierstrass radii with a rounding allowance for the working precision."""
    d = len(coeffs) - 1
    u = mpmath.mpf(2) ** (-bits)
    gamma = 2 * d * u / (1 - 2 * d * u)
    out = []
    for i, z in enumerate(zs):
        az = abs(z)
        fz = abs(poly_eval(coeffs, z))
        rb = gamma * sum(abs(c) * az ** n for n, c in enumerate(coeffs))
        prod = mpmath.mpf(1)
        for j, w in enumerate(zs):
            if j != i:
                prod *= abs(z - w)
        if prod == 0:
            out.append(mpmath.inf)
            continue
        out.append(d * (fz + rb) / (prod * (1 - 4 * d * u)) + u * 4 * max(1, az))
    return out


def _disjoint(zs, rs) -> bool:
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            if abs(zs[i] - zs[j]) <= rs[i] + rs[j]:
                return False
    return True


def _raw_roots(coeffs: Sequence[int], target_error, start=None):
    """Approximate roots with certified disjoint inclusion radii <= target."""
    d = len(coeffs) - 1
    tbits = max(64, int(math.ceil(-log2_abs(target_error))) + 16)
    bits = max(128, tbits + 32)
    if start is None:
        cm = np.zeros((d, d), dtype=float)
        cm[1:, :-1] = np.eye(d - 1)
        cm[:, -1] = [-float(c) for c in coeffs[:-1]]
        start = [complex(z) for z in np.linalg.eigvals(cm)]
    use_poly_roots = False
    while True:
        with workprec(bits):
            cmp = [mpmath.mpf(c) for c in coeffs]
            dcmp = [mpmath.mpf(c) for c in poly_deriv(coeffs)]
            if use_poly_roots:
                zs = list(mpmath.polyroots(list(reversed(cmp)), maxsteps=400,
                                           extraprec=bits, error=False))
                zs = [mpmath.mpc(z) for z in zs]
            else:
                zs = [mpmath.mpc(z) for z in start]
            iters = 12 + int(math.log2(bits)) * 2
            zs = [_newton(cmp, dcmp, z, bits, iters) for z in zs]
            rs = _inclusion_radii(coeffs, zs, bits)
            ok = _disjoint(zs, rs)
            if ok and max(rs) <= target_error:
                return zs, rs, bits
        if not ok and not use_poly_roots:
            use_poly_roots = True
            continue
        if bits > 4 * tbits + 4 * DECISION_CAP_BITS:
            raise PrecisionExhausted(f"cannot separate roots of {list(coeffs)}")
        start = zs
        bits *= 2


def compute_roots(P: Sequence[int], target_error=1e-60) -> RootSet:
    """Certified roots of a squarefree monic integer polynomial."""
    coeffs = [int(c) for c in P]
    d = len(coeffs) - 1
    if d == 1:
        with workprec(DEFAULT_BITS):
            z = mpmath.mpf(-coeffs[0])
        return classify_roots([(z, mpmath.mpf(0))], prec=DEFAULT_BITS)
    zs, rs, bits = _raw_roots(coeffs, target_error)
    return classify_roots(list(zip(zs, rs)), prec=bits)


def classify_roots(roots, prec: int = DEFAULT_BITS) -> RootSet:
    """Decide realness, pairing and size class; return the canonical RootSet.

    ``roots`` is a list of (approximation, radius) with disjoint disks.
    """
    n = len(roots)
    with workprec(prec):
        zs = [mpmath.mpc(z) for z, _ in roots]
        rs = [mpmath.mpf(r) for _, r in roots]
        for z, r in zip(zs, rs):
            a = abs(z)
            if a - r <= 1 <= a + r:
                raise UnitCircleRoot(f"root {mpmath.nstr(z, 15)} not separated from |z|=1")
        kind = [None] * n
        mate = [None] * n
        for i in range(n):
            mirror = mpmath.conj(zs[i])
            hits = [j for j in range(n) if abs(zs[j] - mirror) <= rs[i] + rs[j]]
            straddle = abs(zs[i].imag) <= rs[i]
            if straddle and hits == [i]:
                kind[i] = "real"
            elif not straddle and len(hits) == 1 and hits[0] != i:
                kind[i] = "pair"
                mate[i] = hits[0]
            else:
                raise AmbiguousRealness(f"cannot decide realness of {mpmath.nstr(zs[i], 15)}")
        for i in range(n):
            if kind[i] == "pair" and mate[mate[i]] != i:
                raise AmbiguousRealness("inconsistent conjugate matching")

        def group(large: bool):
            idx = [i for i in range(n) if (abs(zs[i]) > 1) == large]
            reals = sorted((i for i in idx if kind[i] == "real"), key=lambda i: zs[i].real)
            reps = sorted((i for i in idx if kind[i] == "pair" and zs[i].imag > 0),
                          key=lambda i: (mpmath.arg(zs[i]), abs(zs[i])))
            vals, errs, real = [], [], []
            for i in reals:
                vals.append(mpmath.mpf(zs[i].real))
                errs.append(rs[i])
                real.append(True)
            for i in reps:
                vals.append(mpmath.mpc(zs[i]))
                errs.append(max(rs[i], rs[mate[i]]))
                real.append(False)
            for i in reps:
                vals.append(mpmath.conj(zs[i]))
                errs.append(max(rs[i], rs[mate[i]]))
                real.append(False)
            return vals, errs, real, len(reals), len(reps)

        lv, le, lr, r1, r2 = group(True)
        sv, se, sr, s1, s2 = group(False)
    if not lv:
        raise UnitCircleRoot("no root outside the unit circle")
    return RootSet(roots=tuple(lv + sv), errors=tuple(le + se), real=tuple(lr + sr),
                   p=len(lv), r1=r1, r2=r2, prec=prec, s1=s1, s2=s2)


def _rematch(old: RootSet, coeffs, bits: int) -> RootSet:
    """Refine every root of ``old`` to ``bits`` keeping its index."""
    target = mpmath.mpf(2) ** (-bits)
    zs, rs, wbits = _raw_roots(coeffs, target, start=list(old.roots))
    with workprec(wbits):
        order = []
        for z in old.roots:
            j = min(range(len(zs)), key=lambda i: abs(zs[i] - z))
            order.append(j)
        if sorted(order) != list(range(len(zs))):
            raise PrecisionExhausted("root refinement lost track of the ordering")
        vals, errs = [], []
        for idx, j in enumerate(order):
            partner = old.partner(idx)
            z = zs[j]
            if old.real[idx]:
                vals.append(mpmath.mpf(z.real))
                errs.append(rs[j])
            elif partner > idx:
                vals.append(mpmath.mpc(z.real, abs(z.imag) if idx < partner else -abs(z.imag)))
                errs.append(max(rs[j], rs[order[partner]]))
            else:
                rep = vals[partner]
                vals.append(mpmath.conj(rep))
                errs.append(errs[partner])
    return RootSet(roots=tuple(vals), errors=tuple(errs), real=old.real, p=old.p,
                   r1=old.r1, r2=old.r2, prec=wbits, s1=old.s1, s2=old.s2)


@dataclass(frozen=True, eq=False)
class CompanionSpec:
    """Validated data for f = P^(k+1)."""

    P: tuple
    k: int
    A: tuple
    D: int
    B: int
    roots: RootSet
    int_roots: tuple  # exact integer value of each root, or None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __hash__(self):
        return hash((self.P, self.k))

    def __eq__(self, other):
        return isinstance(other, CompanionSpec) and (self.P, self.k) == (other.P, other.k)

    @property
    def d(self) -> int:
        return len(self.P) - 1

    @property
    def p(self) -> int:
        return self.roots.p

    @property
    def r1(self) -> int:
        return self.roots.r1

    @property
    def r2(self) -> int:
        return self.roots.r2

    @property
    def large_integer(self) -> bool:
        """All large roots are rational integers (exact orbit arithmetic)."""
        return all(v is not None for v in self.int_roots[: self.p])

    @property
    def splits(self) -> bool:
        """Every root is a rational integer (exact kernel arithmetic)."""
        return all(v is not None for v in self.int_roots)

    @property
    def is_integer_base(self) -> bool:
        return self.d == 1 and self.k == 0

    @property
    def base(self) -> int:
        return -self.P[0]

    def roots_at(self, bits: int) -> RootSet:
        """Roots refined so that every error is below 2**-bits."""
        bits = max(int(bits), 64)
        if self.roots.prec >= bits + 16 and all(e <= mpmath.mpf(2) ** -bits for e in self.roots.errors):
            return self.roots
        # round up to reuse cache entries
        key = ("roots", 1 << max(7, (bits - 1).bit_length()))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        rs = self._exact_rootset(key[1]) or _rematch(self.roots, self.P, key[1])
        with self._lock:
            self._cache.setdefault(key, rs)
        return rs

    def _exact_rootset(self, bits: int):
        if not self.splits:
            return None
        with workprec(bits + 16):
            vals = tuple(mpmath.mpf(v) for v in self.int_roots)
        return RootSet(roots=vals, errors=tuple(mpmath.mpf(0) for _ in vals), real=self.roots.real,
                       p=self.p, r1=self.r1, r2=self.r2, prec=bits + 16, s1=self.roots.s1, s2=self.roots.s2)

    def cache(self, key, fn):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        val = fn()
        with self._lock:
            return self._cache.setdefault(key, val)

    def max_abs_log2(self) -> float:
        return max(float(mpmath.log(abs(z), 2)) for z in self.roots.roots[: self.p])

    def to_json(self) -> dict:
        rows = []
        for j, z in enumerate(self.roots.roots):
            zc = mpmath.mpc(z)
            rows.append({
                "re": fmt(zc.real, 30),
                "im": fmt(zc.imag, 30),
                "err": fmt(self.roots.errors[j], 5),
                "large": j < self.p,
                "real": bool(self.roots.real[j]),
            })
        return {"P": list(self.P), "k": self.k, "D": self.D, "B": self.B, "A": list(self.A),
                "p": self.p, "r1": self.r1, "r2": self.r2, "roots": rows}


def validate_companion(P: Sequence[int], k: int = 0, target_error=1e-60) -> CompanionSpec:
    """Check the standing hypotheses on P and build the companion data."""
    coeffs = [int(c) for c in P]
    if not coeffs:
        raise ValueError("empty coefficient list")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if coeffs[-1] != 1:
        raise NotMonic(f"leading coefficient {coeffs[-1]} != 1")
    if len(coeffs) < 2:
        raise ConstantPolynomial("degree must be positive")
    if coeffs[0] == 0:
        raise ZeroConstantTerm("constant coefficient is 0")
    g = poly_gcd(coeffs, poly_deriv(coeffs))
    if len(g) > 1:
        raise MultipleRoots(f"gcd(P, P') has degree {len(g) - 1}")
    A = poly_pow(coeffs, k + 1)
    target = target_error
    while True:
        try:
            rs = compute_roots(coeffs, target)
            break
        except (UnitCircleRoot, AmbiguousRealness):
            bits = -log2_abs(target)
            if bits >= DECISION_CAP_BITS:
                raise
            target = mpmath.mpf(2) ** (-min(DECISION_CAP_BITS, 2 * bits))
    ints = []
    for j, z in enumerate(rs.roots):
        val = None
        if rs.real[j]:
            c = int(mpmath.nint(mpmath.re(z)))
            if poly_eval(coeffs, c) == 0:
                val = c
        ints.append(val)
    B = sum(abs(a) for a in A) // 2
    return CompanionSpec(P=tuple(coeffs), k=int(k), A=tuple(A), D=len(A) - 1, B=B, roots=rs,
                         int_roots=tuple(ints))
