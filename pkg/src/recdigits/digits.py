"""Signed-digit streams, the realisation phi_m, the reconstruction theta and the shift sigma.

phi_m(s) = sum_n rho_{m-n} s_n.  The float64 windowed evaluator below is the
fast path: rho decays geometrically, so a window of width w read from the
certified (C, delta) envelope gives every phi_m to a fixed absolute accuracy.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import mpmath
import numpy as np

from ._mp import workprec, bits_for, log2_abs, to_mpf, fmt
from .algebra import CompanionSpec
from .errors import DigitOutOfRange
from .kernel import decay_bound, h_vector, rho, rho_floats, rho_suffix_exact, rho_table
from .orbit import InitialValue, psi_digits, shift_value, support_bound

BLOCK = 4096
EPS64 = 2.0 ** -53
EXACT_THETA_MAX = 1 << 14


# words

@dataclass(frozen=True)
class NormalizedWord:
    digits: tuple
    length: int  # length of the word before trailing zeros were stripped

    def __len__(self):
        return len(self.digits)


def normalize_word(v: Sequence[int], B: int | None = None) -> NormalizedWord:
    """Canonical representative of a word modulo trailing zeros."""
    v = [int(x) for x in v]
    if B is not None:
        for i, x in enumerate(v):
            if abs(x) > B:
                raise DigitOutOfRange(f"digit {x} at position {i} outside [-{B}, {B}]")
    n = len(v)
    while v and v[-1] == 0:
        v.pop()
    return NormalizedWord(tuple(v), n)


# streams

class DigitStream:
    """Left-eventually-zero digit sequence with random access.

    Subclasses implement ``_fetch(a, b)`` for a <= b inside [lo, hi); indices
    outside the support read as zero.  ``hi`` is None for unbounded streams.
    """

    def __init__(self, spec: CompanionSpec, lo: int, hi: int | None):
        self.spec = spec
        self.lo = int(lo)
        self.hi = None if hi is None else int(hi)

    @property
    def B(self) -> int:
        return self.spec.B

    @property
    def R(self) -> int:
        return max(0, -self.lo)

    @property
    def finite(self) -> bool:
        return self.hi is not None

    def _fetch(self, a: int, b: int) -> np.ndarray:
        raise NotImplementedError

    def window(self, a: int, b: int) -> np.ndarray:
        """Digits s_n for a <= n < b as int64."""
        out = np.zeros(max(0, b - a), dtype=np.int64)
        lo = max(a, self.lo)
        hi = b if self.hi is None else min(b, self.hi)
        if hi > lo:
            out[lo - a: hi - a] = self._fetch(lo, hi)
        return out

    def __getitem__(self, n: int) -> int:
        return int(self.window(n, n + 1)[0])

    def digits(self, a: int, b: int) -> list[int]:
        return [int(x) for x in self.window(a, b)]

    def shift(self, steps: int) -> "DigitStream":
        return shift_stream(self, steps)

    def nonzero_end(self) -> int | None:
        """One past the last nonzero index for finite streams."""
        if self.hi is None:
            return None
        w = self.window(self.lo, self.hi)
        nz = np.nonzero(w)[0]
        return self.lo + int(nz[-1]) + 1 if len(nz) else self.lo

    def to_text(self, length: int | None = None) -> str:
        end = self.hi if length is None else self.lo + length
        if end is None:
            raise ValueError("length required for unbounded streams")
        return f"R={self.R}\n" + " ".join(str(x) for x in self.window(-self.R, end))

    # constructors

    @staticmethod
    def from_word(spec: CompanionSpec, digits: Sequence[int], start: int = 0) -> "ArrayStream":
        return ArrayStream(spec, np.asarray(list(digits), dtype=np.int64), start)

    @staticmethod
    def zero(spec: CompanionSpec) -> "ArrayStream":
        return ArrayStream(spec, np.zeros(0, dtype=np.int64), 0)

    @staticmethod
    def from_generator(spec: CompanionSpec, fn: Callable[[int, int], Sequence[int]], lo: int = 0,
                       hi: int | None = None) -> "GeneratorStream":
        return GeneratorStream(spec, fn, lo, hi)

    @staticmethod
    def random(spec: CompanionSpec, seed: int, lo: int = 0, hi: int | None = None) -> "GeneratorStream":
        """Uniform digits over the alphabet, reproducible per block."""
        B = spec.B

        def fn(a, b):
            out = []
            for blk in range(a // BLOCK, (b - 1) // BLOCK + 1):
                key = 2 * blk if blk >= 0 else -2 * blk - 1  # seeds must be nonnegative
                rng = np.random.default_rng([int(seed), key])
                out.append(rng.integers(-B, B + 1, size=BLOCK, dtype=np.int64))
            arr = np.concatenate(out)
            off = a - (a // BLOCK) * BLOCK
            return arr[off: off + (b - a)]

        return GeneratorStream(spec, fn, lo, hi)

    @staticmethod
    def from_text(spec: CompanionSpec, text: str) -> "ArrayStream":
        head, _, body = text.strip().partition("\n")
        if not head.startswith("R="):
            raise ValueError("stream text must start with R=<int>")
        R = int(head[2:])
        return ArrayStream(spec, np.array([int(t) for t in body.split()], dtype=np.int64), -R)


class ArrayStream(DigitStream):
    def __init__(self, spec, arr: np.ndarray, start: int = 0):
        arr = np.asarray(arr, dtype=np.int64)
        if arr.size and int(np.abs(arr).max()) > spec.B:
            bad = int(np.nonzero(np.abs(arr) > spec.B)[0][0])
            raise DigitOutOfRange(f"digit {int(arr[bad])} at index {start + bad} outside [-{spec.B}, {spec.B}]")
        super().__init__(spec, min(start, 0) if arr.size == 0 else start, start + arr.size)
        self.arr = arr
        self.start = start

    def _fetch(self, a, b):
        return self.arr[a - self.start: b - self.start]


class GeneratorStream(DigitStream):
    """Stream backed by ``fn(a, b)``; memoised in blocks of 4096 digits."""

    def __init__(self, spec, fn, lo: int = 0, hi: int | None = None, block: int = BLOCK):
        super().__init__(spec, lo, hi)
        self.fn = fn
        self.block = int(block)
        self._blocks: dict = {}
        self._lock = threading.Lock()
        self.origin = None  # initial value whose canonical digits these are, if known

    def _block(self, i: int) -> np.ndarray:
        blk = self._blocks.get(i)
        if blk is not None:
            return blk
        a = self.lo + i * self.block
        b = a + self.block if self.hi is None else min(a + self.block, self.hi)
        arr = np.asarray(self.fn(a, b), dtype=np.int64)
        if arr.shape != (b - a,):
            raise ValueError("digit generator returned the wrong length")
        if arr.size and int(np.abs(arr).max()) > self.spec.B:
            raise DigitOutOfRange(f"generator produced a digit outside [-{self.spec.B}, {self.spec.B}]")
        with self._lock:
            return self._blocks.setdefault(i, arr)

    def _fetch(self, a, b):
        i0 = (a - self.lo) // self.block
        i1 = (b - 1 - self.lo) // self.block
        parts = [self._block(i) for i in range(i0, i1 + 1)]
        arr = parts[0] if len(parts) == 1 else np.concatenate(parts)
        off = a - (self.lo + i0 * self.block)
        return arr[off: off + (b - a)]


class ShiftedStream(DigitStream):
    """sigma^steps applied to a base stream: n -> base[n + steps]."""

    def __init__(self, base: DigitStream, steps: int):
        super().__init__(base.spec, base.lo - steps, None if base.hi is None else base.hi - steps)
        self.base = base
        self.steps = steps

    def _fetch(self, a, b):
        return self.base.window(a + self.steps, b + self.steps)


class SegmentedStream(DigitStream):
    """Concatenation of periodic blocks: segment i covers [start_i, end_i) and
    repeats ``pattern_i`` (None means zeros).  Used for the reduction streams,
    whose length makes explicit storage impractical."""

    def __init__(self, spec, segments: list, hi: int | None = None):
        segs = sorted(segments, key=lambda t: t[0])
        lo = segs[0][0] if segs else 0
        end = max((s[1] for s in segs), default=0)
        super().__init__(spec, min(lo, 0), end if hi is None else hi)
        self.segments = [(int(a), int(b), None if p is None else np.asarray(p, dtype=np.int64)) for a, b, p in segs]
        self._starts = [s[0] for s in self.segments]
        for a, b, p in self.segments:
            if p is not None and p.size and int(np.abs(p).max()) > spec.B:
                raise DigitOutOfRange("segment pattern outside the alphabet")

    def _fetch(self, a, b):
        out = np.zeros(b - a, dtype=np.int64)
        i = max(0, bisect.bisect_right(self._starts, a) - 1)
        while i < len(self.segments):
            s, e, p = self.segments[i]
            if s >= b:
                break
            lo, hi = max(a, s), min(b, e)
            if hi > lo and p is not None:
                idx = (np.arange(lo, hi, dtype=np.int64) - s) % p.size
                out[lo - a: hi - a] = p[idx]
            i += 1
        return out

    def nonzero_end(self) -> int | None:
        stop = self.hi
        for s, e, p in reversed(self.segments):
            e = min(e, stop)
            if p is None or e <= s or not p.any():
                continue
            # the last nonzero digit sits within one period of the segment end
            a = max(s, e - p.size)
            nz = np.nonzero(self.window(a, e))[0]
            if len(nz):
                return a + int(nz[-1]) + 1
            nz = np.nonzero(self.window(s, a))[0]
            if len(nz):
                return s + int(nz[-1]) + 1
        return self.lo

    def truncate(self, length: int) -> "SegmentedStream":
        segs = []
        for s, e, p in self.segments:
            if s < length:
                segs.append((s, min(e, length), p))
        return SegmentedStream(self.spec, segs, hi=length)


def shift_stream(s: DigitStream, steps: int) -> DigitStream:
    """sigma^steps: the stream n -> s_{n + steps}."""
    if steps == 0:
        return s
    if isinstance(s, ShiftedStream):
        return ShiftedStream(s.base, s.steps + steps) if s.steps + steps else s.base
    return ShiftedStream(s, steps)


PSI_BLOCK = 256


def psi_stream(g: InitialValue, target_error=1e-30, block: int = PSI_BLOCK) -> DigitStream:
    """The canonical digit stream of g, generated lazily.

    Digit cost grows with the index (precision ~ n log2|alpha|), so these
    streams memoise in smaller blocks than the generic default.
    """
    R = support_bound(g)

    def fn(a, b):
        return psi_digits(g, a, b - 1, target_error)

    out = GeneratorStream(g.spec, fn, -R, None, block=block)
    out.origin = g
    return out


# phi: high-precision path

def _windows(spec: CompanionSpec, target: float):
    """(left, right) window widths: rho_t used for -right <= t <= left."""
    dec = decay_bound(spec)
    w = dec.window(spec.B, target)
    left = 0 if spec.p == spec.d else w
    return left, w


def phi(s: DigitStream, m: int, target_error=1e-30):
    """(phi_m(s), error bound).  Exact when every root is an integer and s is short."""
    spec = s.spec
    if spec.p == spec.d and s.finite and s.hi - m <= BLOCK:
        # rho is rational and vanishes at positive indices: only the suffix counts
        a = max(m, s.lo)
        pad = a - m
        return rho_suffix_exact(spec, [0] * pad + list(s.window(a, s.hi))), 0
    dec = decay_bound(spec)
    left, right = _windows(spec, mpmath.mpf(target_error) / 2)
    a, b = m - left, m + right + 1
    if s.finite:
        a, b = max(a, s.lo), min(b, s.hi)
    digs = s.window(a, b) if b > a else np.zeros(0, dtype=np.int64)
    nterms = max(1, b - a)
    tab = rho_table(spec, mpmath.mpf(target_error) / (4 * spec.B * nterms))
    with workprec(bits_for(target_error, 4) + 16):
        tot = mpmath.mpf(0)
        err = mpmath.mpf(0)
        for n, d in zip(range(a, b), digs):
            if d:
                v, e = tab.get(m - n)
                tot += to_mpf(v) * int(d)
                err += abs(int(d)) * mpmath.mpf(e)
        tail = 0.0
        if s.lo < m - left and left > 0:
            tail += spec.B * dec.tail(left)
        if (not s.finite or s.hi > m + right + 1):
            tail += spec.B * dec.tail(right)
        err += mpmath.mpf(tail) + abs(tot) * mpmath.mpf(2) ** (-mpmath.mp.prec + 4) * nterms
    return tot, err


# phi: windowed float64 path

def phi_windowed(s: DigitStream, M: int, N: int, target: float = 1e-13, chunk: int = 1 << 17):
    """phi_m(s) for M <= m < N in float64 with per-point error bounds.

    Returns (values, errors).  The error combines the float rounding bound of
    the convolution with the certified truncation tail (only where digits can
    exist outside the window).
    """
    spec = s.spec
    dec = decay_bound(spec)
    left, right = _windows(spec, target)
    kern = rho_floats(spec, -right, left)  # kern[t + right] = rho_t
    akern = np.abs(kern)
    width = left + right + 1
    gamma = (width + 4) * EPS64
    tail_l = spec.B * dec.tail(left) if left else 0.0
    tail_r = spec.B * dec.tail(right)
    vals = np.empty(max(0, N - M), dtype=np.float64)
    errs = np.empty_like(vals)
    for c0 in range(M, N, chunk):
        c1 = min(N, c0 + chunk)
        d = s.window(c0 - left, c1 + right).astype(np.float64)
        # phi_m = sum_t rho_t s_{m-t}: correlate digits with the reversed kernel
        v = np.convolve(d, kern, mode="valid")
        rb = np.convolve(np.abs(d), akern, mode="valid") * gamma
        idx = np.arange(c0, c1)
        t = np.zeros(c1 - c0)
        if tail_l:
            t += np.where(idx - left > s.lo, tail_l, 0.0)
        if s.hi is None:
            t += tail_r
        else:
            t += np.where(idx + right + 1 < s.hi, tail_r, 0.0)
        vals[c0 - M: c1 - M] = v
        errs[c0 - M: c1 - M] = rb + t + np.abs(v) * EPS64
    return vals, errs


# theta

def _theta_cut(spec: CompanionSpec, h, start: int, target) -> int:
    """Index N such that digits beyond N change every coordinate by <= target/2."""
    rs = spec.roots
    k = spec.k
    with workprec(64):
        worst = 0
        for j in range(spec.r1 + spec.r2):
            rho_j = 1 / (abs(rs.roots[j]) - rs.errors[j])
            cmax = max(abs(mpmath.mpmathify(c)) for c in h.coeffs[j]) * (1 + mpmath.mpf(2) ** -40)
            lt = mpmath.log(mpmath.mpf(target) / 2)
            N = max(start, 1)
            # geometric tail sum_{n>N} B (k+1)^2 2^k cmax n^k rho^n
            while True:
                q = rho_j * ((N + 2) / mpmath.mpf(N + 1)) ** k
                if q < 1:
                    tail = spec.B * (k + 1) ** 2 * 2 ** k * cmax * mpmath.mpf(N + 1) ** k * rho_j ** (N + 1) / (1 - q)
                    if mpmath.log(tail) <= lt:
                        break
                N = N * 2 if q >= 1 else N + max(1, int((mpmath.log(tail) - lt) / -mpmath.log(q)) + 1)
            worst = max(worst, N)
    return int(worst)


def theta(s: DigitStream, target_error=1e-30) -> InitialValue:
    """Reconstruct the initial value whose orbit realises phi(s) modulo 1."""
    spec = s.spec
    k = spec.k
    nfree = spec.r1 + spec.r2
    h = h_vector(spec, 128)
    start = s.lo
    if s.finite:
        end = s.nonzero_end()
        if end <= start:
            return InitialValue.zero(spec)
    if h.exact and s.finite and end - start <= EXACT_THETA_MAX:
        digs = s.window(start, end)
        coords = []
        for j in range(nfree):
            a = Fraction(spec.int_roots[j])
            S = [Fraction(0)] * (k + 1)
            for n, d in zip(range(start, end), digs):
                if d:
                    w = int(d) / a ** n
                    for e in range(k + 1):
                        S[e] += w * (-n) ** e
            coords.append(tuple(_combine(h.coeffs[j], S, k)))
        return InitialValue(spec, tuple(coords))
    cut = _theta_cut(spec, h, start, target_error)
    tail_present = (not s.finite) or end - 1 > cut
    stop = cut + 1 if not s.finite else min(end, cut + 1)
    # precision: largest term ~ B |c| |alpha|^R n^k, plus accumulation over the range
    with workprec(64):
        amax = max(float(mpmath.log(abs(spec.roots.roots[j]), 2)) for j in range(nfree))
    span = stop - start + 2
    scale = math.log2(spec.B + 1) + max(0, -start) * amax + k * math.log2(span + abs(start) + 2) + 8
    bits = bits_for(target_error, scale) + int(math.log2(span)) + 16
    hb = h_vector(spec, bits) if not h.exact else h
    rs = spec.roots_at(bits + 16)
    digs = s.window(start, stop)
    nz = np.nonzero(digs)[0]
    coords = []
    with workprec(bits):
        for j in range(nfree):
            a = rs.roots[j]
            inv = 1 / a
            S = [mpmath.mpf(0) if j < spec.r1 else mpmath.mpc(0)] * (k + 1)
            # jump between nonzero digits with exact powers
            prev = None
            pw = None
            for i in nz:
                n = start + int(i)
                if prev is None:
                    pw = inv ** n
                else:
                    gap = n - prev
                    pw = pw * (inv ** gap if gap > 1 else inv)
                prev = n
                w = int(digs[i]) * pw
                for e in range(k + 1):
                    S[e] += w * (-n) ** e
            cj = [to_mpf(c) if isinstance(c, Fraction) else c for c in hb.coeffs[j]]
            row = _combine(cj, S, k)
            if j < spec.r1:
                row = [mpmath.mpf(mpmath.re(c)) for c in row]
            coords.append(tuple(row))
    err = mpmath.mpf(target_error) / 2 if tail_present else mpmath.mpf(target_error) / 4
    return InitialValue(spec, tuple(coords), err)


def _combine(c: Sequence, S: Sequence, k: int) -> list:
    """tilde c_i = sum_{l >= i} c_l binom(l, i) S_{l-i}."""
    out = []
    for i in range(k + 1):
        acc = 0
        for l in range(i, k + 1):
            acc += c[l] * math.comb(l, i) * S[l - i]
        out.append(acc)
    return out


def check_commutation(spec: CompanionSpec, s: DigitStream, tol=1e-20, target_error=1e-30) -> dict:
    """Compare theta(sigma s) with tau(theta s) coordinate by coordinate."""
    lhs = theta(shift_stream(s, 1), target_error)
    rhs = shift_value(theta(s, target_error), 1)
    dist = lhs.distance(rhs)
    return {
        "lhs": lhs.to_text(30),
        "rhs": rhs.to_text(30),
        "distance": fmt(dist, 5),
        "tol": fmt(mpmath.mpf(tol), 5),
        "pass": bool(dist <= tol),
    }
