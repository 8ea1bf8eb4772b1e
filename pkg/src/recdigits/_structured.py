"""Hit counting for long segmented streams without touching every digit.

A segmented stream is a run of periodic blocks and zero blocks.  Deep inside
a periodic block phi_m depends only on m modulo the period, so one period of
e-values is classified and weighted by multiplicity.  Inside a zero block
phi_m is an exponential polynomial in m built from the digits on either side:

    F(m) = -sum_{small j} L_j(m - A) alpha_j^(m - A) + sum_{large j} R_j(m - E) alpha_j^(m - E)

Away from the block ends |F| is far below every nonzero region boundary, so
only its sign matters; the sign is read off in log space and confirmed in
high precision when the float estimate is too close to call.
"""

from __future__ import annotations

import bisect
import math
from fractions import Fraction

import mpmath
import numpy as np

from ._mp import workprec, to_mpf, as_fraction
from .digits import SegmentedStream, _windows, phi
from .errors import UndecidableRounding
from .kernel import decay_bound, h_vector

TINY_LOG2 = -46     # |phi| bound in the middle of a zero block
BOUNDARY_LOG2 = -40  # nonzero region boundaries must be at least this far from 0
MIN_FAST = 1 << 14   # shorter stretches are evaluated explicitly
CHUNK = 1 << 20
MP_BITS = 320
EXACT_SUFFIX_MAX = 1 << 17


def _pieces(s: SegmentedStream, M: int, N: int):
    """Cover [M, N) by (A, E, pattern) blocks; gaps and the outside are zero blocks."""
    out = []
    cur = -(1 << 62)
    for a, b, p in s.segments:
        if a > cur:
            out.append((cur, a, None))
        if p is not None and p.size and np.any(p):
            out.append((a, b, p))
        else:
            out.append((a, b, None))
        cur = b
    out.append((cur, 1 << 62, None))
    # merge adjacent zero blocks
    merged = []
    for blk in out:
        if merged and blk[2] is None and merged[-1][2] is None and merged[-1][1] == blk[0]:
            merged[-1] = (merged[-1][0], blk[1], None)
        elif blk[1] > blk[0]:
            merged.append(blk)
    return [blk for blk in merged if blk[1] > M and blk[0] < N]


class _Tally:
    """Running counts plus the block layout shared by the refinement hooks."""

    def __init__(self, s, regions, margin):
        self.s = s
        self.regions = regions
        self.margin = margin
        self.inside = [0] * len(regions)
        self.unc = [0] * len(regions)
        hi = s.hi if s.hi is not None else s.lo
        self.zeros = [(A, E) for A, E, p in _pieces(s, s.lo - 1, hi + 1) if p is None]
        self._zstarts = [A for A, _ in self.zeros]
        self._forms: dict = {}
        self._blocks: dict = {}
        self.periodic = [(A, E, p) for A, E, p in _pieces(s, s.lo - 1, hi + 1) if p is not None]
        self._pstarts = [A for A, _, _ in self.periodic]
        lw, rw = _windows(s.spec, mpmath.mpf(1e-30) / 4)
        self.near = 4 * max(lw, rw) + 64

    def block(self, S: int, E: int, p) -> "_PeriodicBlock":
        b = self._blocks.get(S)
        if b is None:
            b = self._blocks[S] = _PeriodicBlock(self.s, S, E, p)
        return b

    def block_at(self, m: int):
        i = bisect.bisect_right(self._pstarts, m) - 1
        if i >= 0:
            S, E, p = self.periodic[i]
            if S <= m < E:
                return self.block(S, E, p)
        return None

    def formula(self, A: int, E: int) -> "_ZeroFormula":
        f = self._forms.get(A)
        if f is None:
            f = self._forms[A] = _ZeroFormula(self.s, A, E)
        return f

    def exact_suffix(self, m: int):
        """phi_m as an exact rational from every digit after m (all roots large)."""
        s = self.s
        if s.spec.p != s.spec.d or s.hi is None or s.hi - max(m, s.lo) > EXACT_SUFFIX_MAX:
            return None
        from .kernel import rho_suffix_exact
        a = max(m, s.lo)
        v = rho_suffix_exact(s.spec, [0] * (a - m) + list(s.window(a, s.hi)))
        return v - math.floor(v + Fraction(1, 2)), 0

    def exact_refine(self, m: int):
        """Exact near part plus the signed far part across the next zero block.

        Only used when every root is large: then rho is rational, rho_t = 0
        for t >= 1 and phi_m sees digits n >= m only.  Values such as -1/2 + 2^-60000 keep
        their side of the boundary this way.
        """
        from .kernel import rho_suffix_exact
        from .orbit import split_unit
        s = self.s
        i = bisect.bisect_right(self._zstarts, m)
        if i and self.zeros[i - 1][1] > m:
            F, err = self.formula(*self.zeros[i - 1]).value_mp(m)
            v = as_fraction(F)
            return v - math.floor(v + Fraction(1, 2)), err
        if i >= len(self.zeros) or self.zeros[i][0] - m > self.near:
            blk = self.block_at(m) if s.spec.splits else None
            if blk is not None:
                return blk.refine(m)
            v, err = phi(s, m, 1e-30)
            return (split_unit(v).e, 0) if isinstance(v, Fraction) else (split_unit(v, 0).e, err)
        A, E = self.zeros[i]
        near = rho_suffix_exact(s.spec, s.window(m, A))
        F, err = self.formula(A, E).value_mp(m)
        v = near + as_fraction(F)
        return v - math.floor(v + Fraction(1, 2)), err


def _explicit(s, tally: _Tally, a: int, b: int):
    from .equidist import evalues_stream, membership
    if b <= a:
        return
    for c0 in range(a, b, CHUNK):
        ev = evalues_stream(s, c0, min(b, c0 + CHUNK))
        if s.spec.p == s.spec.d:
            ev.refine = tally.exact_refine
            ev.fallback = tally.exact_suffix
        for i, reg in enumerate(tally.regions):
            ins, unc = membership(ev, reg, tally.margin)
            tally.inside[i] += int(ins.sum())
            tally.unc[i] += int(unc.sum())


def _eulerian_sum(e: int, z: Fraction) -> Fraction:
    """sum_{w >= 0} w^e z^w for |z| < 1, exactly."""
    if e == 0:
        return 1 / (1 - z)
    num = Fraction(0)
    for m in range(e):
        A = sum((-1) ** j * math.comb(e + 1, j) * (m + 1 - j) ** e for j in range(m + 2))
        num += A * z ** (m + 1)
    return num / (1 - z) ** (e + 1)


class _DeltaView:
    """Digits of s minus the two-sided periodic extension of one block."""

    def __init__(self, s, S: int, pattern: np.ndarray):
        self.spec = s.spec
        self.s = s
        self.S = S
        self.p = pattern
        self.lo = -(1 << 62)
        self.hi = 1 << 62

    def window(self, a: int, b: int) -> np.ndarray:
        idx = (np.arange(a, b, dtype=np.int64) - self.S) % self.p.size
        return self.s.window(a, b) - self.p[idx]


class _PeriodicBlock:
    """phi_m = V(phase of m) + F_delta(m) on a periodic block (integer roots only).

    V is the exact value of the periodic extension; F_delta comes from the
    deviation of the true digits from that extension, which vanishes inside
    the block, so it has the zero-block exponential form.
    """

    def __init__(self, s, S: int, E: int, pattern: np.ndarray):
        self.s, self.S, self.E, self.p = s, S, E, pattern
        self._vals: dict = {}
        self._form = None

    def value(self, r: int) -> Fraction:
        """Exact phi of the periodic extension at indices m = S + r (mod P)."""
        if r in self._vals:
            return self._vals[r]
        spec = self.s.spec
        h = h_vector(spec)
        P = self.p.size
        k = spec.k
        tot = Fraction(0)
        for j in range(spec.p):
            a = Fraction(spec.int_roots[j])
            cs = h.coeffs[j]
            Ss = [_eulerian_sum(e, 1 / a ** P) for e in range(k + 1)]
            for i in range(P):
                d = int(self.p[(r + i) % P])
                if not d:
                    continue
                acc = Fraction(0)
                for e in range(k + 1):
                    g = sum(cs[l] * math.comb(l, e) * (-P) ** e * (-i) ** (l - e) for l in range(e, k + 1))
                    acc += g * Ss[e]
                tot += d * acc / a ** i
        self._vals[r] = tot
        return tot

    def formula(self) -> "_ZeroFormula":
        if self._form is None:
            self._form = _ZeroFormula(_DeltaView(self.s, self.S, self.p), self.S, self.E)
        return self._form

    def refine(self, m: int):
        V = self.value((m - self.S) % self.p.size)
        F, err = self.formula().value_mp(m)
        v = V + as_fraction(F)
        return v - math.floor(v + Fraction(1, 2)), err


def _periodic(s, tally: _Tally, base: int, P: int, lo: int, hi: int, block=None):
    """Interior of a periodic block: classify one period and weight by multiplicity."""
    from .equidist import EValues, evalues_stream, membership, _decide_exact
    from .orbit import split_unit
    ev = evalues_stream(s, base, base + P)
    # members of a residue class share the in-window sum; tails differ by at most the error
    ev.err = 2 * ev.err

    def refine(m):
        v, err = phi(s, m, 1e-30)
        if isinstance(v, Fraction):
            return split_unit(v).e, 0
        return split_unit(v, 0).e, 2 * err

    ev = EValues(ev.M, ev.e, ev.err, refine)
    n_total = hi - lo
    first = (lo - base) % P
    q, rem = divmod(n_total, P)
    mult = q + (((np.arange(P) - first) % P) < rem).astype(np.int64)
    strict = tally.margin == 0
    mg = None if strict else tally.margin
    for i, reg in enumerate(tally.regions):
        ins, unc = membership(ev, reg, mg)
        tally.inside[i] += int((mult * ins).sum())
        if not unc.any():
            continue
        for c in np.nonzero(unc)[0]:
            if block is None or tally.margin:
                if strict:
                    raise UndecidableRounding(f"periodic phase at index {base + int(c)} undecidable", index=base + int(c))
                tally.unc[i] += int(mult[c])
                continue
            # members m = base + c + P t inside [lo, hi)
            t0 = -((base + c - lo) // P)
            members = np.arange(base + c + t0 * P, hi, P, dtype=np.int64)
            members = members[members >= lo]
            got, und = _split_class(tally, block, reg, members, strict)
            tally.inside[i] += got
            tally.unc[i] += und


def _split_class(tally, block: "_PeriodicBlock", reg, members: np.ndarray, strict: bool):
    """Classify every member of a residue class whose shared value sits on a boundary."""
    V = block.value(int((members[0] - block.S) % block.p.size))
    e = V - math.floor(V + Fraction(1, 2))
    form = block.formula()
    sg = form.signs(members)
    bounds = reg.boundaries()
    on_boundary = any((e - b) % 1 == 0 for b in bounds)
    got = und = 0
    if on_boundary:
        up = reg.contains_exact(e + Fraction(1, 1 << 80)) if e + Fraction(1, 1 << 80) < Fraction(1, 2) else reg.contains_exact(e + Fraction(1, 1 << 80) - 1)
        down = reg.contains_exact(e - Fraction(1, 1 << 80)) if e - Fraction(1, 1 << 80) >= -Fraction(1, 2) else reg.contains_exact(e - Fraction(1, 1 << 80) + 1)
        at = reg.contains_exact(e)
        for m, sgn in zip(members, sg):
            if sgn == 2:
                r = form.sign_mp(int(m))
                if r is None:
                    got_ex = tally.exact_suffix(int(m))
                    if got_ex is not None:
                        got += reg.contains_exact(got_ex[0])
                        continue
                    if strict:
                        raise UndecidableRounding(f"sign at index {int(m)} undecidable", index=int(m))
                    und += 1
                    continue
                sgn = r
            got += up if sgn == 1 else down if sgn == -1 else at
        return int(got), und
    # value off the boundary: the deviation only matters if it can reach it
    dist = min(min(abs(e - b), 1 - abs(e - b)) for b in bounds) if bounds else Fraction(1)
    lb = form.log_bound(members)
    safe = lb < math.log(float(dist)) - 1e-9 if dist > 0 else np.zeros(members.shape, dtype=bool)
    inside = reg.contains_exact(e)
    got = int(safe.sum()) * inside
    for m in members[~safe]:
        from .equidist import _decide_exact
        v, err = block.refine(int(m))
        dec = _decide_exact(reg, v, err)
        if dec is None:
            got = tally.exact_suffix(int(m))
            dec = None if got is None else _decide_exact(reg, *got)
        if dec is None:
            if strict:
                raise UndecidableRounding(f"value at index {int(m)} undecidable", index=int(m))
            und += 1
        else:
            got += dec
    return int(got), und


class _ZeroFormula:
    """Exponential-polynomial form of phi_m on a zero block [A, E)."""

    def __init__(self, s: SegmentedStream, A: int, E: int):
        spec = s.spec
        self.spec = spec
        self.A, self.E = A, E
        k = spec.k
        rs = spec.roots_at(MP_BITS + 32)
        h = h_vector(spec, MP_BITS)
        dec = decay_bound(spec)
        self.families = []  # (sign, factor, anchor, alpha, coeffs, errs) all mp
        with workprec(MP_BITS):
            tw = dec.window(spec.B, mpmath.mpf(2) ** -200)
            for j in range(spec.d):
                pj = rs.partner(j)
                if pj < j:
                    continue
                large = j < spec.p
                alpha = rs.roots[j]
                if rs.real[j]:
                    alpha = mpmath.mpf(mpmath.re(alpha))
                cs = [to_mpf(c) if isinstance(c, Fraction) else c for c in h.coeffs[j]]
                r_up = abs(alpha) + rs.errors[j]
                r_up = 1 / (abs(alpha) - rs.errors[j]) if large else r_up
                coeffs, errs = self._coeffs(s, alpha, cs, large, r_up, tw, k)
                if all(c == 0 for c in coeffs) and all(e == 0 for e in errs):
                    continue
                factor = 1 if pj == j else 2
                anchor = E if large else A
                self.families.append((1 if large else -1, factor, anchor, alpha, coeffs, errs, r_up))
        self.zero = not self.families

    def _coeffs(self, s, alpha, cs, large, r_up, width, k):
        """Coefficients of the polynomial in x = m - anchor, with truncation bounds."""
        B = s.spec.B
        while True:
            if large:
                a, b = self.E, min(self.E + width, s.hi)
                complete = b >= s.hi
            else:
                a, b = max(self.A - width, s.lo), self.A
                complete = a <= s.lo
            digs = s.window(a, b) if b > a else np.zeros(0, dtype=np.int64)
            nz = np.nonzero(digs)[0]
            coeffs = [mpmath.mpf(0)] * (k + 1)
            mag = mpmath.mpf(0)
            for i in nz:
                n = a + int(i)
                v = (n - self.E) if large else (self.A - n)
                # left: alpha^v with v >= 1; right: alpha^(-v') with v' = n - E >= 0
                w = int(digs[i]) * (alpha ** (-v) if large else alpha ** v)
                vv = -v if large else v
                for ii in range(k + 1):
                    acc = 0
                    for l in range(ii, k + 1):
                        acc += cs[l] * math.comb(l, ii) * mpmath.mpf(vv) ** (l - ii)
                    coeffs[ii] += w * acc
                    mag += abs(w * acc)
            if any(c != 0 for c in coeffs) or complete or width > (1 << 22):
                break
            width *= 4
        errs = []
        for ii in range(k + 1):
            e = mag * mpmath.mpf(2) ** (-MP_BITS + 40)
            if not complete:
                # B * sum_{v > width} r^v * sum_l |c_l| C(l, ii) v^(l - ii)
                for l in range(ii, k + 1):
                    ex = l - ii
                    W = width
                    q = r_up * (mpmath.mpf(W + 2) / (W + 1)) ** ex
                    if q >= 1:
                        raise ValueError("truncation window too small for the envelope")
                    e += B * abs(cs[l]) * math.comb(l, ii) * mpmath.mpf(W + 1) ** ex * r_up ** (W + 1) / (1 - q)
            errs.append(e)
        return coeffs, errs

    # float log-space evaluation

    def _prepare(self):
        fams = []
        with workprec(MP_BITS):
            for sign, factor, anchor, alpha, coeffs, errs, r_up in self.families:
                cmax = max(abs(c) for c in coeffs)
                if cmax == 0:
                    sc = -math.inf
                    ch = np.zeros(len(coeffs), dtype=np.complex128)
                else:
                    sc = float(mpmath.log(cmax))
                    ch = np.array([complex(c / cmax) for c in coeffs], dtype=np.complex128)
                emax = max(errs)
                if emax == 0:
                    se = -math.inf
                    eh = np.zeros(len(errs))
                else:
                    se = float(mpmath.log(emax))
                    eh = np.array([float(e / emax) for e in errs])
                lnr = float(mpmath.log(abs(alpha)))
                arg = float(mpmath.arg(alpha)) if not isinstance(alpha, mpmath.mpf) else (0.0 if alpha > 0 else math.pi)
                # truncation bound decays like r_up^x (left, x >= 0) or r_up^-x (right, x < 0)
                lu = float(mpmath.log(r_up))
                rate = lu + abs(lu) * 1e-14 if sign < 0 else -lu - abs(lu) * 1e-14
                fams.append((sign, factor, anchor, sc, ch, se, eh, lnr, arg, rate))
        return fams

    def signs(self, m: np.ndarray) -> np.ndarray:
        """+1 / -1 / 0 for each m; 2 where the float estimate cannot decide."""
        if self.zero:
            return np.zeros(m.shape, dtype=np.int8)
        F, Eb, _, _ = self._eval(m)
        return np.where(F > Eb, 1, np.where(F < -Eb, -1, 2)).astype(np.int8)

    def log_bound(self, m: np.ndarray) -> np.ndarray:
        """Natural log of an upper bound on |phi_m|."""
        if self.zero:
            return np.full(m.shape, -np.inf)
        F, Eb, S, mx = self._eval(m)
        with np.errstate(divide="ignore"):
            return mx + np.log(S + Eb)

    def _eval(self, m: np.ndarray):
        if not hasattr(self, "_fams"):
            self._fams = self._prepare()
        k = self.spec.k
        logs, vals, errl = [], [], []
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for sign, factor, anchor, sc, ch, se, eh, lnr, arg, rate in self._fams:
                x = (m - anchor).astype(np.float64)
                ax = np.abs(x)
                val = np.zeros(m.shape, dtype=np.complex128)
                hp = np.zeros(m.shape)
                for c in ch[::-1]:
                    val = val * x + c
                    hp = hp * ax + abs(c)
                base = sc + x * lnr + math.log(factor)
                aval = np.abs(val)
                logs.append(base + np.log(aval))
                vals.append(sign * np.cos(np.angle(val) + x * arg))
                # float error: angle and magnitude of alpha^x, Horner rounding
                dang = (np.abs(x * arg) + np.pi) * 4.5e-16 + 1e-15
                dmag = np.abs(x * lnr) * 4.5e-16 + 1e-15
                errl.append(base + np.log(aval * (dang + dmag) * 1.01 + (2 * k + 4) * 1.2e-16 * hp))
                if not math.isinf(se):
                    ep = np.zeros(m.shape)
                    for e in eh[::-1]:
                        ep = ep * ax + e
                    errl.append(se + math.log(factor) + np.log(ep) + x * rate)
            mx = np.max(np.stack(logs + errl), axis=0)
            F = np.zeros(m.shape)
            S = np.zeros(m.shape)
            Eb = np.zeros(m.shape)
            for lm, v in zip(logs, vals):
                w = np.exp(lm - mx)
                F += w * v
                S += w
            for el in errl:
                Eb += np.exp(el - mx)
            Eb = Eb * 1.01 + 1e-300
        return F, Eb, S, mx

    def sign_mp(self, m: int) -> int | None:
        F, err = self.value_mp(m)
        if abs(F) <= err:
            return None
        return 1 if F > 0 else -1

    def value_mp(self, m: int):
        """(F(m), error bound) in high precision; exponents are unbounded in mpmath."""
        if self.zero:
            return mpmath.mpf(0), mpmath.mpf(0)
        with workprec(MP_BITS):
            F = mpmath.mpf(0)
            err = mpmath.mpf(0)
            for sign, factor, anchor, alpha, coeffs, errs, r_up in self.families:
                x = m - anchor
                px = 0
                for c in reversed(coeffs):
                    px = px * x + c
                t = px * alpha ** x
                F += sign * factor * mpmath.re(t)
                ep = 0
                for e in reversed(errs):
                    ep = ep * abs(x) + e
                r = r_up if sign < 0 else 1 / r_up
                err += factor * (ep * r ** x + abs(t) * mpmath.mpf(2) ** (-MP_BITS + 48) * (abs(x) + 1))
            return +F, +err


def _fast_ok(regions, margin) -> bool:
    lim = 2.0 ** BOUNDARY_LOG2 + (float(margin) if margin else 0.0)
    for reg in regions:
        for b in reg.boundaries():
            if b != 0 and abs(b) < lim:
                return False
            if b == 0 and margin:
                return False
    return True


def _sign_membership(reg):
    pos = any(a <= 0 < b for a, b in reg.parts)
    neg = any(a < 0 <= b for a, b in reg.parts)
    zero = reg.contains_exact(Fraction(0))
    return pos, neg, zero


def _zero_block(s, tally: _Tally, A: int, E: int, lo: int, hi: int, W: int):
    if hi - lo < MIN_FAST or not _fast_ok(tally.regions, tally.margin):
        _explicit(s, tally, lo, hi)
        return
    form = tally.formula(A, E)
    tiny = TINY_LOG2 * math.log(2)
    # near the block ends phi is not small: evaluate those points explicitly
    t1, t2 = lo, hi
    if lo < A + W:
        m = np.arange(lo, min(hi, A + W), dtype=np.int64)
        big = np.nonzero(form.log_bound(m) >= tiny)[0]
        if big.size:
            t1 = int(m[big[-1]]) + 1
    if hi > E - W:
        m = np.arange(max(t1, E - W), hi, dtype=np.int64)
        big = np.nonzero(form.log_bound(m) >= tiny)[0] if m.size else m
        if big.size:
            t2 = int(m[big[0]])
    t2 = max(t1, t2)
    _explicit(s, tally, lo, t1)
    _explicit(s, tally, t2, hi)
    npos = nneg = nzero = nunc = 0
    extra = []
    for c0 in range(t1, t2, CHUNK):
        m = np.arange(c0, min(t2, c0 + CHUNK), dtype=np.int64)
        sg = form.signs(m)
        amb = np.nonzero(sg == 2)[0]
        for i in amb:
            r = form.sign_mp(int(m[i]))
            if r is None:
                got_ex = tally.exact_suffix(int(m[i]))
                if got_ex is not None:
                    extra.append(got_ex[0])
                    sg[i] = 3
                    continue
                if tally.margin == 0:
                    raise UndecidableRounding(f"sign of phi at index {int(m[i])} undecidable", index=int(m[i]))
                nunc += 1
                sg[i] = 4
            else:
                sg[i] = r
        npos += int((sg == 1).sum())
        nneg += int((sg == -1).sum())
        nzero += int((sg == 0).sum())
    for i, reg in enumerate(tally.regions):
        pos, neg, zero = _sign_membership(reg)
        tally.inside[i] += npos * pos + nneg * neg + nzero * zero + sum(reg.contains_exact(v) for v in extra)
        tally.unc[i] += nunc


def count_segmented(s: SegmentedStream, regions, M: int, N: int, margin=None):
    """CountReports for each region over M <= m < N."""
    from .equidist import CountReport
    spec = s.spec
    tally = _Tally(s, list(regions), margin)
    # window shared by every member of a periodic residue class (mp refinement)
    lw, rw = _windows(spec, mpmath.mpf(1e-30) / 4)
    Wp = max(lw, rw) + 2
    dec = decay_bound(spec)
    Wz = dec.window(spec.B, 2.0 ** TINY_LOG2) + 1
    for A, E, p in _pieces(s, M, N):
        lo, hi = max(A, M), min(E, N)
        if p is None:
            _zero_block(s, tally, A, E, lo, hi, Wz)
            continue
        P = int(p.size)
        ilo, ihi = max(lo, A + Wp), min(hi, E - Wp)
        if ihi - ilo < 2 * P or E - A - 2 * Wp < P + 1:
            _explicit(s, tally, lo, hi)
            continue
        _explicit(s, tally, lo, ilo)
        _explicit(s, tally, ihi, hi)
        base = A + Wp
        _periodic(s, tally, base, P, ilo, ihi, tally.block(A, E, p) if spec.splits else None)
    return [CountReport(tally.inside[i], tally.unc[i], M, N, margin) for i in range(len(tally.regions))]
