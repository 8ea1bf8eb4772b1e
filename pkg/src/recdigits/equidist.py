"""Dyadic intervals on the torus, hit counters and goodness statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np

from ._mp import workprec, to_mpf, fmt, as_fraction
from .algebra import CompanionSpec
from .digits import DigitStream, SegmentedStream, ArrayStream, phi, phi_windowed, theta
from .errors import GapTooCoarse, UndecidableRounding
from .kernel import rho_suffix_exact
from .orbit import InitialValue, eval_x, exact_x0, orbit_values, split_unit

HALF = Fraction(1, 2)
FLOAT_TARGET = 1e-13
EXACT_SUFFIX_MAX = 1 << 17


# intervals

def _level(x: Fraction) -> int:
    den = x.denominator
    if den & (den - 1):
        raise ValueError(f"{x} is not dyadic")
    return den.bit_length() - 1


@dataclass(frozen=True)
class DyadicInterval:
    """Half-open [a/2^level, b/2^level) inside [-1/2, 1/2]."""

    level: int
    a: int
    b: int

    def __post_init__(self):
        half = 1 << (self.level - 1) if self.level >= 1 else None
        if self.level < 1 or not (-half <= self.a < self.b <= half):
            raise ValueError(f"invalid dyadic interval ({self.level}, {self.a}, {self.b})")

    @classmethod
    def from_fractions(cls, lo, hi) -> "DyadicInterval":
        lo, hi = Fraction(lo), Fraction(hi)
        lev = max(1, _level(lo), _level(hi))
        return cls(lev, int(lo * 2 ** lev), int(hi * 2 ** lev))

    @property
    def lo(self) -> Fraction:
        return Fraction(self.a, 1 << self.level)

    @property
    def hi(self) -> Fraction:
        return Fraction(self.b, 1 << self.level)

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    @property
    def D(self) -> int:
        """Smallest level at which both endpoints are representable."""
        return max(1, _level(self.lo), _level(self.hi))

    def region(self) -> "TorusRegion":
        return TorusRegion(((self.lo, self.hi),))

    def __str__(self):
        return f"[{self.lo},{self.hi})"


def parse_interval(text: str) -> DyadicInterval:
    """"a/2^l:b/2^l" (or any dyadic fractions) -> DyadicInterval."""
    lo_s, hi_s = text.split(":")

    def num(t):
        t = t.strip()
        if "/" not in t:
            return Fraction(t)
        p, q = t.split("/", 1)
        q = q.strip()
        if q.startswith("2^"):
            return Fraction(int(p), 1 << int(q[2:]))
        return Fraction(int(p), int(q))

    return DyadicInterval.from_fractions(num(lo_s), num(hi_s))


@dataclass(frozen=True)
class TorusRegion:
    """Union of at most two disjoint half-open intervals of [-1/2, 1/2)."""

    parts: tuple

    def __post_init__(self):
        ps = sorted((Fraction(a), Fraction(b)) for a, b in self.parts)
        for a, b in ps:
            if not (-HALF <= a < b <= HALF):
                raise ValueError("region components must lie in [-1/2, 1/2]")
        for (a0, b0), (a1, b1) in zip(ps, ps[1:]):
            if a1 < b0:
                raise ValueError("region components overlap")
        object.__setattr__(self, "parts", tuple(ps))

    @classmethod
    def full(cls) -> "TorusRegion":
        return cls(((-HALF, HALF),))

    @property
    def length(self) -> Fraction:
        return sum((b - a for a, b in self.parts), Fraction(0))

    def boundaries(self) -> list[Fraction]:
        """Boundary points on the torus; +-1/2 only counts if it separates."""
        pts = set()
        for a, b in self.parts:
            pts.add(a)
            pts.add(b)
        touches_lo = any(a == -HALF for a, _ in self.parts)
        touches_hi = any(b == HALF for _, b in self.parts)
        pts.discard(HALF)
        if touches_lo and touches_hi:
            pts.discard(-HALF)
        else:
            if touches_hi:
                pts.add(-HALF)
        # merge internal joins such as [a, c) u [c, b)
        for (a0, b0), (a1, b1) in zip(self.parts, self.parts[1:]):
            if b0 == a1:
                pts.discard(b0)
        return sorted(pts)

    def contains(self, e: np.ndarray) -> np.ndarray:
        out = np.zeros(e.shape, dtype=bool)
        for a, b in self.parts:
            out |= (e >= float(a)) & (e < float(b))
        return out

    def contains_exact(self, e) -> bool:
        return any(a <= e < b for a, b in self.parts)

    def boundary_distance(self, e: np.ndarray) -> np.ndarray:
        pts = self.boundaries()
        if not pts:
            return np.full(e.shape, np.inf)
        d = np.full(e.shape, np.inf)
        for p in pts:
            x = np.abs(e - float(p))
            d = np.minimum(d, np.minimum(x, 1.0 - x))
        return d

    def __str__(self):
        return " u ".join(f"[{a},{b})" for a, b in self.parts)


def as_region(x) -> TorusRegion:
    if isinstance(x, TorusRegion):
        return x
    if isinstance(x, DyadicInterval):
        return x.region()
    raise TypeError("expected a TorusRegion or DyadicInterval")


def _intervals_at_level(lev: int) -> list[DyadicInterval]:
    half = 1 << (lev - 1)
    out = []
    for a in range(-half, half):
        for b in range(a + 1, half + 1):
            if lev == 1 or (a % 2) or (b % 2):
                out.append(DyadicInterval(lev, a, b))
    # shorter first, then left to right
    out.sort(key=lambda I: (I.b - I.a, I.a))
    return out


def enumerate_intervals(count: int) -> list[DyadicInterval]:
    """First ``count`` dyadic intervals ordered by minimal level, then length, then left end."""
    out: list[DyadicInterval] = []
    lev = 1
    while len(out) < count:
        out.extend(_intervals_at_level(lev))
        lev += 1
    return out[:count]


def neighborhood_intervals(I: DyadicInterval, gap_level: int | None = None):
    """(I1, I2) with I1 inside I inside I2, endpoints moved by 2^-gap_level."""
    if gap_level is None:
        gap_level = I.D + 3
    off = Fraction(1, 1 << gap_level)
    a, b = I.lo, I.hi
    lo1, hi1 = a + off, b - off
    if lo1 >= hi1:
        raise GapTooCoarse(f"gap 2^-{gap_level} leaves no inner interval in {I}")
    I1 = DyadicInterval.from_fractions(lo1, hi1)
    if a == -HALF and b == HALF:
        I2 = TorusRegion.full()
    elif a == -HALF:
        if b + off >= HALF - off:
            raise GapTooCoarse("outer region would cover the torus")
        I2 = TorusRegion(((-HALF, b + off), (HALF - off, HALF)))
    elif b == HALF:
        if a - off <= -HALF + off:
            raise GapTooCoarse("outer region would cover the torus")
        I2 = TorusRegion(((-HALF, -HALF + off), (a - off, HALF)))
    else:
        if a - off < -HALF or b + off > HALF:
            raise GapTooCoarse(f"gap 2^-{gap_level} pushes the outer interval off [-1/2, 1/2)")
        I2 = TorusRegion(((a - off, b + off),))
    return I1, I2


# e-values

@dataclass
class EValues:
    """e-values for indices M..N-1: float approximations, error bounds and a
    refinement hook returning an exact or high-precision value."""

    M: int
    e: np.ndarray
    err: np.ndarray
    refine: object = None  # callable(index) -> (value, err)
    exact: bool = False
    fallback: object = None  # callable(index) -> (value, err) or None, tried after refine
    deepen: object = None  # callable(index, target) -> (value, err) at a tighter target, tried last


def _reduce(phi_vals: np.ndarray) -> np.ndarray:
    e = phi_vals - np.floor(phi_vals + 0.5)
    e[e >= 0.5] -= 1.0
    return e


def evalues_stream(s: DigitStream, M: int, N: int, target: float = FLOAT_TARGET) -> EValues:
    vals, errs = phi_windowed(s, M, N, target)

    def refine(m):
        v, err = phi(s, m, 1e-30)
        if isinstance(v, Fraction):
            return split_unit(v).e, 0
        return split_unit(v, 0).e, err

    fallback = None
    if s.spec.p == s.spec.d and s.finite:
        end = []

        def fallback(m):
            # every root large: phi_m is a rational suffix sum
            if not end:
                end.append(s.nonzero_end())
            a = max(m, s.lo)
            if a >= end[0]:
                return Fraction(0), 0
            if end[0] - a > EXACT_SUFFIX_MAX:
                return None
            v = rho_suffix_exact(s.spec, [0] * (a - m) + list(s.window(a, end[0])))
            return v - math.floor(v + HALF), 0

    origin = getattr(s, "origin", None)
    if fallback is None and origin is not None:
        x0 = exact_x0(origin)

        def fallback(m):
            # canonical digits of a known value: phi_m equals e(x_m)
            if origin.exact:
                v, _ = eval_x(origin, m)
                return split_unit(v).e, 0
            if m == 0 and x0 is not None:
                return split_unit(x0).e, 0
            return None

    def deepen(m, target):
        v, err = phi(s, m, target)
        if isinstance(v, Fraction):
            return split_unit(v).e, 0
        return split_unit(v, 0).e, err

    return EValues(M, _reduce(vals), errs + np.abs(vals) * 2.0 ** -52, refine, fallback=fallback, deepen=deepen)


def _exact_orbit_evalues(g: InitialValue, M: int, N: int) -> EValues:
    spec = g.spec
    coords = [[as_fraction(c) for c in cs] for cs in g.coords]
    Q = 1
    for cs in coords:
        for c in cs:
            Q = Q * c.denominator // math.gcd(Q, c.denominator)
    polys = [[int(c * Q) for c in cs] for cs in coords]
    alphas = [spec.int_roots[j] for j in range(len(coords))]
    n_len = N - M
    e = np.empty(n_len)
    resid = [0] * n_len
    neg = {}
    start = max(M, 0)
    for n in range(M, min(N, 0)):
        x = sum(Fraction(_pe(p, n)) * Fraction(a) ** n for p, a in zip(polys, alphas)) / Q
        v = x - math.floor(x + HALF)
        neg[n] = v
        e[n - M] = float(v)
    if start < N:
        pw = [pow(a, start, Q) for a in alphas]
        halfQ = Q // 2 if Q % 2 == 0 else None
        for n in range(start, N):
            X = 0
            for p, w in zip(polys, pw):
                X += _pe(p, n) * w
            r = X % Q
            # e = r/Q reduced into [-1/2, 1/2)
            if 2 * r >= Q:
                r -= Q
            resid[n - M] = r
            e[n - M] = r / Q
            pw = [(w * a) % Q for w, a in zip(pw, alphas)]

    def refine(n):
        if n in neg:
            return neg[n], 0
        return Fraction(resid[n - M], Q), 0

    err = np.abs(e) * 2.0 ** -52
    return EValues(M, e, err, refine, exact=True)


def _pe(p, n):
    acc = 0
    for c in reversed(p):
        acc = acc * n + c
    return acc


def evalues_orbit(g: InitialValue, M: int, N: int, target=1e-30, chunk: int = 2048) -> EValues:
    if g.exact:
        return _exact_orbit_evalues(g, M, N)
    es, errs, mp_e = [], [], []
    for c0 in range(M, N, chunk):
        c1 = min(N, c0 + chunk)
        vals, err = orbit_values(g, c0, c1, target)
        for x in vals:
            sp = split_unit(x, err)
            mp_e.append((sp.e, err))
            es.append(float(sp.e))
            errs.append(float(err))
    e = np.array(es, dtype=np.float64)
    e[e >= 0.5] -= 1.0

    def refine(n):
        return mp_e[n - M]

    x0 = exact_x0(g) if M <= 0 < N else None

    def deepen(n, tgt):
        if n == 0 and x0 is not None:
            return split_unit(x0).e, 0
        x, err = eval_x(g, n, tgt)
        return split_unit(x, err).e, err

    return EValues(M, e, np.array(errs) + np.abs(e) * 2.0 ** -52, refine, deepen=deepen)


# counting

@dataclass(frozen=True)
class CountReport:
    count_in: int
    count_uncertain: int
    M: int
    N: int
    margin: object

    @property
    def length(self) -> int:
        return self.N - self.M

    def to_json(self) -> dict:
        return {"count_in": self.count_in, "count_uncertain": self.count_uncertain,
                "M": self.M, "N": self.N, "margin": "auto" if self.margin is None else fmt(self.margin, 5)}


def _decide_exact(region: TorusRegion, value, err) -> bool | None:
    """Membership of a refined value; None when still within err of a boundary.

    Comparisons run on exact rationals, so values far below the working
    precision of other code paths keep their sign.
    """
    v = as_fraction(value)
    if not -HALF <= v < HALF:
        v -= math.floor(v + HALF)
    e = as_fraction(err) if err else Fraction(0)
    if e:
        for p in region.boundaries():
            dist = abs(v - p)
            dist = min(dist, 1 - dist)
            if dist <= 2 * e:
                return None
    return region.contains_exact(v)


DEEPEN_TARGETS = ("1e-60", "1e-120", "1e-240", "1e-480")


def _resolve(ev: EValues, m: int, region: TorusRegion):
    val, err = ev.refine(m)
    dec = _decide_exact(region, val, err)
    if dec is None and ev.deepen is not None:
        # values very close to a boundary (a Pisot orbit approaching 0, say)
        for tgt in DEEPEN_TARGETS:
            try:
                dec = _decide_exact(region, *ev.deepen(m, mpmath.mpf(tgt)))
            except UndecidableRounding:
                dec = None
            if dec is not None:
                break
    if dec is None and ev.fallback is not None:
        got = ev.fallback(m)
        if got is not None:
            dec = _decide_exact(region, *got)
    return dec


def membership(ev: EValues, region: TorusRegion, margin=None, refine: bool = True):
    """(inside, uncertain) boolean arrays for every index of ``ev``.

    margin None: points within twice their error bound of a boundary are
    refined, and stay uncertain only if refinement fails.  margin 0: the same,
    but failure raises.  margin > 0: points within margin are uncertain.
    """
    region = as_region(region)
    inside = region.contains(ev.e)
    dist = region.boundary_distance(ev.e)
    if margin is None or margin == 0:
        unc = np.zeros(ev.e.shape, dtype=bool)
        for i in np.nonzero(dist < 2 * ev.err)[0]:
            m = ev.M + int(i)
            dec = _resolve(ev, m, region) if refine and ev.refine is not None else None
            if dec is None:
                if margin == 0:
                    raise UndecidableRounding(f"e-value at index {m} on a region boundary", index=m)
                unc[i] = True
            else:
                inside[i] = dec
    else:
        unc = dist < float(margin)
    inside &= ~unc
    return inside, unc


def _report(ev: EValues, region, M, N, margin, refine=True) -> CountReport:
    inside, unc = membership(ev, region, margin, refine)
    return CountReport(int(inside.sum()), int(unc.sum()), M, N, margin)


def count_hits_orbit(g: InitialValue, region, M: int, N: int, margin=None, refine: bool = True) -> CountReport:
    """Count M <= n < N with e(x_n(g)) in region."""
    if not 0 <= M <= N:
        raise ValueError("need 0 <= M <= N")
    region = as_region(region)
    if N == M:
        return CountReport(0, 0, M, N, margin)
    return _report(evalues_orbit(g, M, N), region, M, N, margin, refine)


def count_hits_stream(s: DigitStream, region, M: int, N: int, margin=None, refine: bool = True) -> CountReport:
    """Count M <= m < N with e(phi_m(s)) in region via the windowed evaluator."""
    if not 0 <= M <= N:
        raise ValueError("need 0 <= M <= N")
    region = as_region(region)
    if N == M:
        return CountReport(0, 0, M, N, margin)
    if isinstance(s, SegmentedStream):
        from ._structured import count_segmented
        return count_segmented(s, [region], M, N, margin)[0]
    return _report(evalues_stream(s, M, N), region, M, N, margin, refine)


def count_many(source, regions: Sequence, M: int, N: int, margin=None) -> list[CountReport]:
    """Counts for several regions sharing one e-value computation."""
    regions = [as_region(r) for r in regions]
    if isinstance(source, SegmentedStream):
        from ._structured import count_segmented
        return count_segmented(source, regions, M, N, margin)
    ev = evalues_orbit(source, M, N) if isinstance(source, InitialValue) else evalues_stream(source, M, N)
    return [_report(ev, r, M, N, margin) for r in regions]


# goodness and profiles

def word_stream(spec: CompanionSpec, w) -> DigitStream:
    if isinstance(w, DigitStream):
        return w
    return DigitStream.from_word(spec, list(w), 0)


def is_good(w, m: int, eps, spec: CompanionSpec | None = None):
    """(ok, deficits): whether |I_j| - eps < lambda(theta(w), I_j; |w|)/|w| < |I_j| + eps for j <= m."""
    if isinstance(w, DigitStream):
        s = w
        n = s.hi
    else:
        if spec is None:
            raise ValueError("spec required for a plain word")
        s = word_stream(spec, w)
        n = len(list(w)) if not isinstance(w, np.ndarray) else w.size
    if not n or n < 1:
        raise ValueError("word must be nonempty")
    ev = evalues_stream(s, 0, n)
    ok = True
    rows = []
    for j, I in enumerate(enumerate_intervals(m), start=1):
        inside, unc = membership(ev, I.region(), margin=0)
        ratio = Fraction(int(inside.sum()), n)
        dev = abs(ratio - I.length)
        good = dev < Fraction(eps).limit_denominator(10 ** 12) if not isinstance(eps, Fraction) else dev < eps
        ok &= bool(good)
        rows.append({"j": j, "interval": str(I), "ratio": float(ratio), "deviation": float(dev), "good": bool(good)})
    return ok, rows


def genericity_profile(source, checkpoints: Sequence[int], m: int, intervals=None, margin=None) -> list[dict]:
    """Rows (N, j, ratio, deviation, uncertain) for each checkpoint and interval."""
    cps = list(checkpoints)
    if cps != sorted(cps) or not cps:
        raise ValueError("checkpoints must be increasing")
    ivs = list(intervals) if intervals is not None else enumerate_intervals(m)
    rows = []
    if isinstance(source, SegmentedStream):
        from ._structured import count_segmented
        for N in cps:
            reps = count_segmented(source, [I.region() for I in ivs], 0, N, margin)
            for j, (I, rep) in enumerate(zip(ivs, reps), start=1):
                rows.append(_row(N, j, I, rep.count_in, rep.count_uncertain))
        return rows
    Nmax = cps[-1]
    ev = evalues_orbit(source, 0, Nmax) if isinstance(source, InitialValue) else evalues_stream(source, 0, Nmax)
    for j, I in enumerate(ivs, start=1):
        inside, unc = membership(ev, I.region(), margin)
        ci = np.concatenate([[0], np.cumsum(inside)])
        cu = np.concatenate([[0], np.cumsum(unc)])
        for N in cps:
            rows.append(_row(N, j, I, int(ci[N]), int(cu[N])))
    rows.sort(key=lambda r: (r["N"], r["j"]))
    return rows


def _row(N, j, I, hits, unc):
    ratio = hits / N
    return {"N": N, "j": j, "interval": str(I), "ratio": ratio,
            "deviation": abs(ratio - float(I.length)), "uncertain": unc}


def profile_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["N", "interval_id", "ratio", "deviation", "uncertain"])
    for r in rows:
        wr.writerow([r["N"], r["j"], repr(float(r["ratio"])), repr(float(r["deviation"])), r["uncertain"]])
    return buf.getvalue()


def sandwich_violation(s: DigitStream, t: DigitStream, I: DyadicInterval, gap_level: int, N: int) -> dict:
    """Smallest L with lambda(theta(t),I1;N) - L < lambda(theta(s),I;N) < lambda(theta(t),I2;N) + L.

    The counts use the whole streams, so digits after index N (where s and t
    may differ) still move the e-values near N.
    """
    I1, I2 = neighborhood_intervals(I, gap_level)
    cs = count_hits_stream(s, I.region(), 0, N)
    c1 = count_hits_stream(t, I1.region(), 0, N)
    c2 = count_hits_stream(t, I2, 0, N)
    if cs.count_uncertain or c1.count_uncertain or c2.count_uncertain:
        raise UndecidableRounding("uncertain counts in sandwich measurement")
    need = max(c1.count_in - cs.count_in, cs.count_in - c2.count_in) + 1
    return {"N": N, "lambda_s_I": cs.count_in, "lambda_t_I1": c1.count_in, "lambda_t_I2": c2.count_in,
            "L_needed": max(1, need)}
