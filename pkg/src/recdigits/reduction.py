"""Seed certificates, block schedules, the concatenated word stream p(beta) and the two verifiers.

The word stream for a schedule (a_n, b_n, c_n) is

    (s|a_1)^b_1 0^(b_1 c_1) (s|a_2)^b_2 0^(b_2 c_2) ...

with s a seed stream whose prefixes are good from c_n on.  Stage n ends at
|V_n| = sum_{j <= n} (a_j + c_j) b_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from ._mp import workprec, fmt
from .algebra import CompanionSpec
from .digits import ArrayStream, DigitStream, SegmentedStream, _windows, phi, theta
from .equidist import (
    FLOAT_TARGET, DyadicInterval, count_hits_stream, count_many, enumerate_intervals,
    evalues_stream, genericity_profile, membership, _decide_exact,
)
from .errors import HorizonExceeded, LengthBeyondStages, SeedRejected
from .kernel import decay_bound, h_vector, rho_floats, rho_suffix_exact
from .orbit import InitialValue, split_unit
from . import sources

MODES = ("strict", "demo")


# beta

@dataclass(frozen=True)
class Beta:
    """beta: N -> positive integers, from "const:M", "linear" or "list:v1,v2,..." (last value repeats)."""

    kind: str
    values: tuple = ()

    def __call__(self, n: int) -> int:
        if n < 1:
            raise ValueError("beta is defined for n >= 1")
        if self.kind == "const":
            return self.values[0]
        if self.kind == "linear":
            return n
        return self.values[min(n, len(self.values)) - 1]

    def prime(self, n: int) -> int:
        return min(n, self(n))

    @property
    def text(self) -> str:
        if self.kind == "const":
            return f"const:{self.values[0]}"
        if self.kind == "linear":
            return "linear"
        return "list:" + ",".join(map(str, self.values))


def parse_beta(text: str) -> Beta:
    t = text.strip()
    if t == "linear":
        return Beta("linear")
    kind, _, rest = t.partition(":")
    try:
        vals = tuple(int(v) for v in rest.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"bad beta descriptor {text!r}") from None
    if kind not in ("const", "list") or not vals or (kind == "const" and len(vals) != 1):
        raise ValueError(f"bad beta descriptor {text!r}")
    if any(v < 1 for v in vals):
        raise ValueError("beta values must be positive")
    return Beta(kind, vals)


# seed certificates

@dataclass
class SeedCertificate:
    """Smallest c_n with s|m (n, 2^-n-1)-good for every tested m in [c_n, horizon]."""

    source: str
    horizon: int
    candidates: dict  # n -> int or None
    worst: dict  # n -> largest deviation over m in [c_n, horizon]
    value: InitialValue | None = None
    stream: DigitStream | None = field(default=None, repr=False)

    def candidate(self, n: int) -> int | None:
        return self.candidates.get(n)

    def to_json(self) -> dict:
        return {
            "source": self.source,
            "horizon": self.horizon,
            "claim": "(n, 2^-n-1)-good for every m in [c_n, horizon]",
            "candidates": {str(n): c for n, c in sorted(self.candidates.items())},
            "worst_deviation": {str(n): fmt(w, 6) for n, w in sorted(self.worst.items()) if w is not None},
        }


def prefix_counts(s: DigitStream, horizon: int, intervals: Sequence[DyadicInterval]):
    """counts[j, m], unc[j, m] = hits of I_j among the e-values of the word s|m, for 0 <= m <= horizon.

    The e-values of a prefix agree with those of the whole stream except
    within one kernel window of its end; those are evaluated per prefix.
    """
    spec = s.spec
    H = int(horizon)
    if s.lo < 0 and np.any(s.window(s.lo, 0)):
        raise ValueError("prefix goodness needs a stream supported on n >= 0")
    left, right = _windows(spec, FLOAT_TARGET)
    right = max(right, 1)
    dec = decay_bound(spec)
    J = len(intervals)
    regions = [I.region() for I in intervals]
    counts = np.zeros((J, H + 1), dtype=np.int64)
    unc = np.zeros((J, H + 1), dtype=np.int64)
    digs = s.window(0, H + right).astype(np.int64)
    exact = spec.p == spec.d

    def prefix_value(i, m):
        """(e, err) of phi_i(s|m), exact when every root is large."""
        if exact:
            v = rho_suffix_exact(spec, digs[i:m])
            return v - math.floor(v + Fraction(1, 2)), 0
        v, err = phi(ArrayStream(spec, digs[:m], 0), i, 1e-30)
        return split_unit(v, 0).e, err

    # whole-stream e-values: valid for every prefix longer than i + right
    ev = evalues_stream(s, 0, H)
    full_in = np.zeros((J, H), dtype=bool)
    close = np.zeros(H, dtype=bool)
    for j, reg in enumerate(regions):
        dist = reg.boundary_distance(ev.e)
        c = dist < 2 * ev.err
        close |= c
        full_in[j] = reg.contains(ev.e) & ~c
    # close points: per-prefix values until the remaining tail is negligible
    W2 = max(_windows(spec, mpmath.mpf(1e-30) / 4)) + 2
    tail2 = spec.B * dec.tail(W2)
    close_idx = np.nonzero(close)[0]
    for i in close_idx:
        i = int(i)
        v_full, e_full = ev.refine(i)
        for m in range(i + right + 1, min(H, i + W2) + 1):
            e, err = prefix_value(i, m)
            for j, reg in enumerate(regions):
                d = _decide_exact(reg, e, err)
                if d is None:
                    unc[j, m] += 1
                else:
                    counts[j, m] += d
        if i + W2 + 1 <= H:
            for j, reg in enumerate(regions):
                d = _decide_exact(reg, v_full, mpmath.mpf(e_full) + tail2)
                tgt = unc if d is None else counts
                if d is None or d:
                    # contributes to every prefix m >= i + W2 + 1
                    tgt[j, i + W2 + 1:] += 1
    # decided whole-stream points, counted once m > i + right
    for j in range(J):
        cum = np.concatenate([[0], np.cumsum(full_in[j])])
        m = np.arange(H + 1)
        counts[j] += cum[np.clip(m - right, 0, H)]
    # last `right` positions of each prefix: t = m - i in [1, right]
    kern = rho_floats(spec, -right, left)  # kern[t + right] = rho_t
    rneg = kern[right::-1][:right]  # rho_0, rho_-1, ..., rho_-(right-1)
    win = np.lib.stride_tricks.sliding_window_view(digs.astype(np.float64), right)[:H]
    terms = win * rneg
    P = np.cumsum(terms, axis=1)
    Pabs = np.cumsum(np.abs(terms), axis=1)
    if left:
        kl = np.concatenate([[0.0], kern[right + 1:]])  # rho_0 (unused), rho_1 .. rho_left
        dl = s.window(-left, H).astype(np.float64)  # dl[x] = d_(x - left)
        L = np.convolve(dl, kl)[left: left + H]
        Labs = np.convolve(np.abs(dl), np.abs(kl))[left: left + H]
        tl = spec.B * dec.tail(left)
        ltail = np.where(np.arange(H) - left > 0, tl, 0.0)
    else:
        L = np.zeros(H)
        Labs = np.zeros(H)
        ltail = np.zeros(H)
    vals = P + L[:, None]
    gam = (right + left + 4) * 2.0 ** -53
    errs = (Pabs + Labs[:, None]) * gam + ltail[:, None] + np.abs(vals) * 2.0 ** -52
    e = vals - np.floor(vals + 0.5)
    for j, reg in enumerate(regions):
        ins = reg.contains(e)
        cl = reg.boundary_distance(e) < 2 * errs
        ins &= ~cl
        for i, t0 in zip(*np.nonzero(cl)):
            i, t = int(i), int(t0) + 1
            if i + t > H:
                continue
            ex, err = prefix_value(i, i + t)
            d = _decide_exact(reg, ex, err)
            if d is None:
                unc[j, i + t] += 1
            else:
                counts[j, i + t] += d
        for t in range(1, right + 1):
            col = ins[:, t - 1]
            # prefix m = i + t
            counts[j, t:] += col[: H + 1 - t]
    return counts, unc


def certify_prefixes(s: DigitStream, horizon: int, n_max: int = 8):
    """(candidates, worst) for n = 1..n_max from prefix hit counts."""
    intervals = enumerate_intervals(n_max)
    counts, unc = prefix_counts(s, horizon, intervals)
    H = int(horizon)
    m = np.arange(1, H + 1, dtype=np.float64)
    dev = np.zeros((n_max, H))
    for j, I in enumerate(intervals):
        lo = counts[j, 1:] / m
        hi = (counts[j, 1:] + unc[j, 1:]) / m
        L = float(I.length)
        dev[j] = np.maximum(np.abs(lo - L), np.abs(hi - L))
    worst_prefix = np.maximum.accumulate(dev, axis=0)  # row n-1: max over j <= n
    cands, worst = {}, {}
    for n in range(1, n_max + 1):
        eps = 2.0 ** (-n - 1)
        good = worst_prefix[n - 1] < eps
        if not good[-1]:
            cands[n] = None
            worst[n] = None
            continue
        bad = np.nonzero(~good)[0]
        c = int(bad[-1]) + 2 if bad.size else 1
        cands[n] = c
        worst[n] = float(worst_prefix[n - 1][c - 1:].max())
    return cands, worst


def seed_digits(spec: CompanionSpec, source: str = "auto", horizon: int = 10_000, seed: int = 0,
                n_max: int = 8, attempts: int = 8):
    """(stream, certificate) for a seed whose prefixes are good from c_n on.

    source: "auto", "champernowne[:balanced|words|classic]", "random" or "zero".
    """
    if horizon < 1000:
        raise ValueError("horizon must be at least 1000")
    kind, _, variant = source.partition(":")
    if kind == "auto":
        kind = "champernowne" if spec.is_integer_base and spec.base >= 2 else "random"
    if kind == "champernowne":
        variant = variant or "balanced"
        s = sources.champernowne_stream(spec, variant)
        cands, worst = certify_prefixes(s, horizon, n_max)
        cert = SeedCertificate(f"champernowne:{variant}", horizon, cands, worst,
                               sources.champernowne_value(spec, 400, variant), s)
        if cands.get(1) is None:
            raise SeedRejected("Champernowne prefix not (1, 1/4)-good at the horizon")
        return s, cert
    if kind == "zero":
        s = DigitStream.zero(spec)
        cands, worst = certify_prefixes(s, horizon, 1)
        raise SeedRejected("the zero stream is never (1, 1/4)-good")
    if kind == "random":
        for t in range(attempts):
            s, g = sources.random_seed_stream(spec, seed + t)
            cands, worst = certify_prefixes(s, horizon, n_max)
            if cands.get(1) is not None:
                return s, SeedCertificate(f"random:{seed + t}", horizon, cands, worst, g, s)
        raise SeedRejected(f"no random seed in [{seed}, {seed + attempts}) passed at horizon {horizon}")
    raise ValueError(f"unknown seed source {source!r}")


# schedules

@dataclass
class ReductionSchedule:
    beta: Beta
    stages: int
    mode: str
    K: int
    beta_prime: list  # index n = 0..stages+1 (entry 0 unused)
    a: list
    b: list
    c: list
    horizon: int
    certificate: SeedCertificate | None = field(default=None, repr=False)
    checks: dict = field(default_factory=dict)

    def growth(self, n: int) -> int:
        return self.K ** n

    @property
    def V(self) -> list:
        """|V_n| for n = 0..stages."""
        out = [0]
        for n in range(1, self.stages + 1):
            out.append(out[-1] + (self.a[n] + self.c[n]) * self.b[n])
        return out

    @property
    def Bn(self) -> list:
        out = [0]
        for n in range(1, self.stages + 1):
            out.append(out[-1] + 2 * self.b[n])
        return out

    def ratios(self) -> list:
        """Dominating ratio |V_n| / ((a_(n+1) + c_(n+1)) b_(n+1)) for n = 1..stages-1."""
        V = self.V
        return [Fraction(V[n], (self.a[n + 1] + self.c[n + 1]) * self.b[n + 1]) for n in range(1, self.stages)]

    def to_json(self) -> dict:
        return {
            "beta": self.beta.text,
            "mode": self.mode,
            "K": self.K,
            "stages": self.stages,
            "strict_growth": self.mode == "strict",
            "horizon": self.horizon,
            "tables": {
                "n": list(range(1, self.stages + 1)),
                "beta_prime": self.beta_prime[1: self.stages + 1],
                "a": [str(x) for x in self.a[1: self.stages + 2]],
                "b": [str(x) for x in self.b[1: self.stages + 1]],
                "c": [str(x) for x in self.c[1: self.stages + 2]],
                "V": [str(x) for x in self.V[1:]],
                "B": [str(x) for x in self.Bn[1:]],
            },
            "checks": self.checks,
        }


def check_schedule(sch: ReductionSchedule) -> dict:
    """Re-evaluate every schedule condition by direct comparison."""
    N = sch.stages
    G = sch.growth
    V = sch.V
    out = {}
    out["a_eq_beta_prime_c"] = all(sch.a[n] == sch.beta_prime[n] * sch.c[n] for n in range(1, N + 2))
    out["c_over_n_gt_growth"] = all(Fraction(sch.c[n], n) > G(n) for n in range(1, N + 2))
    out["A_b_gt_growth"] = all(sch.b[n] > G(n) for n in range(1, N + 1))
    out["B_ab_gt_growth_next_a"] = all(sch.a[n] * sch.b[n] > G(n) * sch.a[n + 1] for n in range(1, N + 1))
    out["C_ab_gt_growth_prefix"] = all(sch.a[n] * sch.b[n] > G(n) * V[n - 1] for n in range(1, N + 1))
    r = sch.ratios()
    out["D_ratio_decreasing"] = all(x > y for x, y in zip(r, r[1:]))
    if sch.certificate is not None:
        out["c_certified"] = all(
            sch.certificate.candidate(n) is not None and sch.c[n] >= sch.certificate.candidate(n)
            for n in range(1, N + 2))
    return out


def build_schedule(beta, spec: CompanionSpec, cert: SeedCertificate, mode: str = "demo", K: int = 4,
                   stages: int = 4) -> ReductionSchedule:
    """Minimal (a_n, b_n, c_n) for n <= stages (a and c also for stages + 1)."""
    if isinstance(beta, str):
        beta = parse_beta(beta)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if mode == "strict":
        K = 4  # 2^(2n)
    if K < 2:
        raise ValueError("K must be >= 2")
    N = stages
    G = lambda n: K ** n
    bp = [0] + [beta.prime(n) for n in range(1, N + 2)]
    a, b, c = [1], [0], [1]
    for n in range(1, N + 2):
        cand = cert.candidate(n) if cert is not None else None
        if cand is None:
            raise HorizonExceeded(f"no certified c_{n} within horizon {cert.horizon if cert else 0}")
        cn = max(cand, n * G(n) + 1)
        c.append(cn)
        a.append(bp[n] * cn)
    V = [0]
    for n in range(1, N + 1):
        lo = G(n) + 1                                   # (A)
        lo = max(lo, G(n) * a[n + 1] // a[n] + 1)       # (B)
        lo = max(lo, G(n) * V[n - 1] // a[n] + 1)       # (C)
        if n >= 3:
            # (D): V_(n-1) / ((a_n + c_n) b_n) < V_(n-2) / ((a_(n-1) + c_(n-1)) b_(n-1))
            num = V[n - 1] * (a[n - 1] + c[n - 1]) * b[n - 1]
            den = (a[n] + c[n]) * V[n - 2]
            lo = max(lo, num // den + 1)
        b.append(lo)
        V.append(V[-1] + (a[n] + c[n]) * b[n])
    sch = ReductionSchedule(beta=beta, stages=N, mode=mode, K=K, beta_prime=bp, a=a, b=b, c=c,
                            horizon=cert.horizon if cert else 0, certificate=cert)
    sch.checks = check_schedule(sch)
    failed = [k for k, v in sch.checks.items() if not v]
    if failed:
        raise AssertionError(f"schedule conditions failed: {failed}")
    return sch


# the word stream and pi

def emit_p_stream(sch: ReductionSchedule, seed: DigitStream, length: int | None = None) -> SegmentedStream:
    """The concatenated word stream, cut at ``length`` (default |V_stages|)."""
    total = sch.V[-1]
    if length is None:
        length = total
    if length > total:
        raise LengthBeyondStages(f"length {length} exceeds |V_{sch.stages}| = {total}")
    segs = []
    pos = 0
    for n in range(1, sch.stages + 1):
        if pos >= length:
            break
        word = seed.window(0, sch.a[n])
        segs.append((pos, pos + sch.a[n] * sch.b[n], word))
        pos += sch.a[n] * sch.b[n]
        segs.append((pos, pos + sch.b[n] * sch.c[n], None))
        pos += sch.b[n] * sch.c[n]
    return SegmentedStream(seed.spec, segs, hi=length) if length < total else SegmentedStream(seed.spec, segs)


def stage_layout(sch: ReductionSchedule) -> list[dict]:
    rows = []
    pos = 0
    for n in range(1, sch.stages + 1):
        rep = sch.a[n] * sch.b[n]
        zero = sch.b[n] * sch.c[n]
        rows.append({"n": n, "word_start": pos, "zero_start": pos + rep, "end": pos + rep + zero})
        pos += rep + zero
    return rows


def digit_at(sch: ReductionSchedule, seed: DigitStream, index: int) -> int:
    """Digit of the word stream at ``index`` from the stage bookkeeping alone."""
    if index < 0:
        return 0
    for row, n in zip(stage_layout(sch), range(1, sch.stages + 1)):
        if index < row["zero_start"]:
            return int(seed[(index - row["word_start"]) % sch.a[n]])
        if index < row["end"]:
            return 0
    raise LengthBeyondStages(f"index {index} beyond the built stages")


def pi_value(sch: ReductionSchedule, seed: DigitStream, horizon: int | None = None,
             target_error=1e-30) -> InitialValue:
    """theta of the word stream cut at ``horizon``."""
    return theta(emit_p_stream(sch, seed, horizon), target_error)


def coordinate_tail_bound(spec: CompanionSpec, horizon: int):
    """Bound on how much digits at indices >= horizon move any coordinate of theta."""
    h = h_vector(spec, 128)
    rs = spec.roots
    k = spec.k
    H = max(int(horizon), 1)
    with workprec(96):
        worst = mpmath.mpf(0)
        for j in range(spec.r1 + spec.r2):
            r = 1 / (abs(rs.roots[j]) - rs.errors[j])
            cmax = max(abs(mpmath.mpmathify(c)) for c in h.coeffs[j]) * (1 + mpmath.mpf(2) ** -40)
            q = r * (mpmath.mpf(H + 1) / H) ** k
            if q >= 1:
                return mpmath.inf
            tail = spec.B * (k + 1) ** 2 * 2 ** k * cmax * mpmath.mpf(H) ** k * r ** H / (1 - q)
            worst = max(worst, tail)
        return worst


# verifiers

def _dec(x, digits=12) -> str:
    return fmt(mpmath.mpf(x.numerator) / x.denominator if isinstance(x, Fraction) else x, digits)


def verify_convergent_case(sch: ReductionSchedule, seed: DigitStream, checkpoints: Sequence[int] | None = None,
                           m: int = 5, threshold: float = 0.05) -> dict:
    """Deviation trend of the word stream at the stage ends |V_n|."""
    stages = list(checkpoints) if checkpoints is not None else list(range(2, sch.stages + 1))
    if not stages and sch.stages >= 1:
        stages = [sch.stages]
    V = sch.V
    stream = emit_p_stream(sch, seed)
    Ns = [V[n] for n in stages]
    intervals = enumerate_intervals(m)
    rows = genericity_profile(stream, Ns, m, intervals) if Ns else []
    table = {}
    unc_total = 0
    for r in rows:
        table.setdefault(r["j"], []).append(r["deviation"])
        unc_total += r["uncertain"]
    ratios = sch.ratios()
    ratio_ok = all(x > y for x, y in zip(ratios, ratios[1:]))
    bp = [sch.beta_prime[n] for n in stages]
    increasing = all(x < y for x, y in zip(bp, bp[1:]))
    per = []
    ok = True
    for j, I in enumerate(intervals, start=1):
        devs = table.get(j, [])
        # the full circle has deviation 0 at every checkpoint; that counts as settled
        flat_zero = bool(devs) and max(devs) == 0
        last_two = len(devs) >= 2 and (devs[-1] < devs[-2] or flat_zero)
        overall = len(devs) >= 2 and (devs[-1] < devs[0] or flat_zero)
        below = bool(devs) and devs[-1] < threshold
        ok &= last_two and below
        per.append({"j": j, "interval": str(I), "deviations": [fmt(mpmath.mpf(d), 8) for d in devs],
                    "decreasing_last_two": bool(last_two), "decreasing_overall": bool(overall),
                    "below_threshold": bool(below)})
    status = "inconclusive" if len(stages) < 2 else ("pass" if ok and ratio_ok and unc_total == 0 else "fail")
    return {
        "verifier": "convergent",
        "checkpoints": [{"n": n, "V": str(v), "beta_prime": b} for n, v, b in zip(stages, Ns, bp)],
        "beta_prime_increasing": increasing,
        "threshold": threshold,
        "intervals": per,
        "dominating_ratios": [_dec(x) for x in ratios],
        "dominating_ratio_decreasing": ratio_ok,
        "uncertain": unc_total,
        "status": status,
        "pass": status == "pass",
    }


def minimal_level(M: int) -> int:
    """Smallest l with 1/(4(M+1)) > 2^(2-l)."""
    l = 1
    while not Fraction(1, 4 * (M + 1)) > Fraction(2) ** (2 - l):
        l += 1
    return l


def verify_divergent_case(sch: ReductionSchedule, seed: DigitStream, checkpoints: Sequence[int] | None = None,
                          M: int | None = None) -> dict:
    """Lower bound on hits near 0 when beta' settles at M."""
    if M is None:
        M = sch.beta_prime[sch.stages]
    if M < 1:
        raise ValueError("M must be >= 1")
    ell = minimal_level(M)
    half = Fraction(1, 2 ** ell)
    I = DyadicInterval.from_fractions(-half, half)
    I1 = DyadicInterval.from_fractions(-half / 2, half / 2)
    stages = list(checkpoints) if checkpoints is not None else [
        n for n in range(1, sch.stages + 1) if sch.beta_prime[n] == M]
    stream = emit_p_stream(sch, seed)
    zero = SegmentedStream(sch.certificate.stream.spec if sch.certificate and sch.certificate.stream is not None
                           else seed.spec, [])
    layout = stage_layout(sch)
    V = sch.V
    rows = []
    ok = bool(stages)
    for n in stages:
        if sch.beta_prime[n] != M:
            raise ValueError(f"checkpoint {n} has beta'({n}) = {sch.beta_prime[n]} != {M}")
        N = V[n]
        rep = count_hits_stream(stream, I, 0, N)
        lam = rep.count_in
        bound = Fraction(N, 4 * (M + 1))
        two_len = 2 * I.length * N
        blk = sch.b[n] * sch.c[n]
        zr = count_hits_stream(zero, I1, 0, blk)
        row = layout[n - 1]
        sub = count_hits_stream(stream, I1, row["zero_start"], row["end"])
        checks = {
            "lambda_ge_quarter_bound": lam >= bound,
            "lambda_gt_twice_length": lam > two_len,
            "zero_block_exact": zr.count_in == blk and zr.count_uncertain == 0,
            "no_uncertain": rep.count_uncertain == 0,
        }
        ok &= all(checks.values())
        rows.append({
            "n": n, "V": str(N), "lambda": lam, "uncertain": rep.count_uncertain,
            "ratio": _dec(Fraction(lam, N)), "bound_1_over_4(M+1)": _dec(Fraction(1, 4 * (M + 1))),
            "twice_length": _dec(2 * I.length), "zero_block_length": blk,
            "zero_stream_count": zr.count_in, "word_stream_zero_block_count": sub.count_in,
            "checks": checks,
        })
    return {
        "verifier": "divergent",
        "M": M,
        "ell": ell,
        "I": str(I),
        "I1": str(I1),
        "checkpoints": rows,
        "status": "pass" if ok else ("inconclusive" if not stages else "fail"),
        "pass": ok,
    }
