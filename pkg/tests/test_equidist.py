from __future__ import annotations

import csv
import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from recdigits import (
    ArrayStream, DigitStream, DyadicInterval, GapTooCoarse, InitialValue, SegmentedStream, TorusRegion,
    count_hits_orbit, count_hits_stream, count_many, enumerate_intervals, genericity_profile, is_good,
    neighborhood_intervals, parse_interval, profile_csv, psi_stream, sandwich_violation, shift_value,
    validate_companion,
)
from recdigits.kernel import rho_suffix_exact

F = Fraction
HALF = F(1, 2)


def iv(lo, hi):
    return DyadicInterval.from_fractions(F(lo), F(hi))


def test_enumeration_prefix():
    got = [str(I) for I in enumerate_intervals(7)]
    assert got == ["[-1/2,0)", "[0,1/2)", "[-1/2,1/2)", "[-1/2,-1/4)", "[-1/4,0)", "[0,1/4)", "[1/4,1/2)"]
    assert enumerate_intervals(1)[0].length == HALF


def test_enumeration_levels_are_monotone():
    ivs = enumerate_intervals(200)
    assert len(set(ivs)) == 200
    levels = [I.D for I in ivs]
    assert levels == sorted(levels)
    assert all(I.D <= j for j, I in enumerate(ivs, start=1))


def test_interval_level_and_parse():
    assert iv(0, F(1, 4)).D == 2
    assert parse_interval("-1/2^3:1/2^3") == iv(F(-1, 8), F(1, 8))
    assert parse_interval("0:1/2") == iv(0, HALF)
    with pytest.raises(ValueError):
        parse_interval("0:1/3")


def test_neighborhoods():
    I1, I2 = neighborhood_intervals(iv(0, F(1, 4)), 4)
    assert I1 == iv(F(1, 16), F(3, 16))
    assert I2.parts == ((F(-1, 16), F(5, 16)),)
    _, I2 = neighborhood_intervals(iv(-HALF, HALF))
    assert I2 == TorusRegion.full()
    I1, I2 = neighborhood_intervals(iv(-HALF, 0), 4)
    assert I2.parts == ((-HALF, F(1, 16)), (F(7, 16), HALF))
    assert I2.length == iv(-HALF, 0).length + F(1, 8)
    _, I2 = neighborhood_intervals(iv(0, HALF), 4)
    assert I2.parts == ((-HALF, F(-7, 16)), (F(-1, 16), HALF))
    with pytest.raises(GapTooCoarse):
        neighborhood_intervals(iv(0, F(1, 4)), 3)


def test_default_gap_level():
    I = iv(F(1, 8), F(3, 8))
    I1, I2 = neighborhood_intervals(I)
    assert I1.lo - I.lo == F(1, 2 ** (I.D + 3))


def test_orbit_count_examples(golden):
    g = InitialValue.constant(golden, 1)
    assert count_hits_orbit(g, iv(F(-1, 8), F(1, 8)), 0, 10).count_in == 6
    assert count_hits_orbit(g, TorusRegion.full(), 0, 37).count_in == 37
    zero = InitialValue.zero(golden)
    assert count_hits_orbit(zero, iv(0, F(1, 4)), 0, 100).count_in == 100


def test_stream_count_examples(base2, golden):
    half = psi_stream(InitialValue.constant(base2, HALF))
    rep = count_hits_stream(half, iv(-HALF, 0), 0, 1)
    assert (rep.count_in, rep.count_uncertain) == (1, 0)
    zs = DigitStream.zero(golden)
    assert count_hits_stream(zs, iv(F(-1, 8), F(1, 8)), 0, 500).count_in == 500


def test_two_paths_agree_golden(golden):
    g = InitialValue.constant(golden, 1)
    s = psi_stream(g)
    for I in enumerate_intervals(7) + [iv(F(-1, 8), F(1, 8))]:
        a = count_hits_orbit(g, I, 0, 1000)
        b = count_hits_stream(s, I, 0, 1000)
        assert (a.count_in, a.count_uncertain) == (b.count_in, b.count_uncertain)
        assert a.count_uncertain == 0


def test_margin_semantics(golden):
    g = InitialValue.constant(golden, 1)
    # n = 0 has e = 0, on the boundary of [0, 1/2): margin > 0 leaves it uncertain
    rep = count_hits_orbit(g, iv(0, HALF), 0, 10, margin=1e-3)
    assert rep.count_uncertain >= 1
    assert count_hits_orbit(g, iv(0, HALF), 0, 10).count_uncertain == 0


@given(st.integers(1, 5), st.integers(0, 40), st.integers(1, 200))
def test_partition_of_level_cells(level, M, length):
    spec = validate_companion([-1, -1, 1])
    g = InitialValue.constant(spec, F(2, 7))
    half = 1 << (level - 1)
    cells = [DyadicInterval(level, a, a + 1) for a in range(-half, half)]
    reps = count_many(g, [c.region() for c in cells], M, M + length)
    assert sum(r.count_in for r in reps) == length
    assert all(r.count_uncertain == 0 for r in reps)


@given(st.integers(0, 60), st.integers(0, 60), st.integers(0, 60))
def test_additivity_and_shift(a, b, c):
    spec = validate_companion([14, -8, 1])
    g = InitialValue.from_text(spec, "1/3;1/5")
    M, N = sorted((a, a + b + c))[0], a + b + c
    mid = a + b
    I = iv(F(-1, 4), F(1, 8))
    whole = count_hits_orbit(g, I, 0, N).count_in
    assert whole == count_hits_orbit(g, I, 0, mid).count_in + count_hits_orbit(g, I, mid, N).count_in
    assert count_hits_orbit(g, I, M, N).count_in == count_hits_orbit(shift_value(g, M, bits=1024), I, 0, N - M).count_in


def test_goodness_examples(base2):
    ok, rows = is_good([0] * 100, 1, F(2, 5), base2)
    assert not ok and rows[0]["deviation"] == 0.5
    ok, rows = is_good([1, -1, 0, 1], 3, F(1, 100), base2)
    assert rows[2]["ratio"] == 1.0 and rows[2]["good"]


def test_champernowne_word_is_good(base2):
    from recdigits.sources import champernowne_stream
    s = champernowne_stream(base2)
    ok, _ = is_good(s.window(0, 10_000), 3, F(1, 20), base2)
    assert ok


def test_profile_examples(golden):
    zero = InitialValue.zero(golden)
    rows = genericity_profile(zero, [10, 100], 2)
    assert [r["deviation"] for r in rows if r["j"] == 2] == [0.5, 0.5]
    g = InitialValue.constant(golden, 1)
    rows = genericity_profile(g, [100, 1000], 2)
    # Pisot orbit: e-values tend to 0 with alternating sign, so neither half is favoured
    assert all(r["uncertain"] == 0 for r in rows)
    with pytest.raises(ValueError):
        genericity_profile(g, [100, 10], 1)


def test_profile_csv_schema(golden):
    rows = genericity_profile(InitialValue.constant(golden, 1), [50], 3)
    text = profile_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["N", "interval_id", "ratio", "deviation", "uncertain"]
    assert len(parsed) == 4


def _exact_count_base2(digits, start, region, M, N):
    """Direct rational evaluation of every e-value (base 2: rho is rational)."""
    spec = validate_companion([-2, 1])
    hits = 0
    for m in range(M, N):
        lo = max(m, start)
        pad = lo - m
        suffix = [0] * pad + list(digits[lo - start:]) if lo - start < len(digits) else []
        v = rho_suffix_exact(spec, suffix) if suffix else F(0)
        e = v - (v + HALF).__floor__()
        hits += region.contains_exact(e)
    return hits


@given(st.lists(st.tuples(st.integers(1, 7), st.integers(1, 30), st.booleans()), min_size=1, max_size=5),
       st.integers(0, 2 ** 16), st.sampled_from(enumerate_intervals(10)))
def test_structured_counter_matches_exact_oracle(blocks, seed, I):
    spec = validate_companion([-2, 1])
    rng = np.random.default_rng(seed)
    segs, pos, flat = [], 0, []
    for period, reps, zero in blocks:
        length = period * reps
        if zero:
            segs.append((pos, pos + length, None))
            flat += [0] * length
        else:
            pat = rng.integers(-1, 2, size=period)
            segs.append((pos, pos + length, pat))
            flat += list(np.tile(pat, reps))
        pos += length
    s = SegmentedStream(spec, segs)
    rep = count_hits_stream(s, I, 0, pos)
    assert rep.count_uncertain == 0
    assert rep.count_in == _exact_count_base2(flat, 0, I.region(), 0, pos)


@pytest.mark.parametrize("poly", [[-1, -1, 1], [14, -8, 1], [25, -8, 1], [-3, 1]])
def test_structured_counter_matches_explicit_stream(poly):
    spec = validate_companion(poly)
    rng = np.random.default_rng(11)
    pat1 = rng.integers(-spec.B, spec.B + 1, size=7)
    pat2 = rng.integers(-spec.B, spec.B + 1, size=13)
    # zero runs stay short enough for the explicit path to resolve by precision alone
    segs = [(0, 7 * 300, pat1), (2100, 2400, None), (2400, 2400 + 13 * 200, pat2), (5000, 5300, None)]
    seg = SegmentedStream(spec, segs)
    flat = ArrayStream(spec, seg.window(0, 5300), 0)
    for I in enumerate_intervals(7) + [iv(F(-1, 64), F(1, 64))]:
        for M, N in [(0, 5300), (150, 4000), (2100, 2400)]:
            a = count_hits_stream(seg, I, M, N)
            b = count_hits_stream(flat, I, M, N)
            assert (a.count_in, a.count_uncertain) == (b.count_in, b.count_uncertain)


def test_sandwich_report_fields(golden):
    rng = np.random.default_rng(1)
    s = ArrayStream(golden, rng.integers(-1, 2, size=600), 0)
    t = ArrayStream(golden, np.concatenate([s.window(0, 500), rng.integers(-1, 2, size=100)]), 0)
    rep = sandwich_violation(s, t, iv(0, F(1, 4)), 5, 500)
    assert rep["N"] == 500 and rep["L_needed"] >= 1
    assert rep["lambda_t_I1"] - rep["L_needed"] < rep["lambda_s_I"] < rep["lambda_t_I2"] + rep["L_needed"]
