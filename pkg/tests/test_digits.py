from __future__ import annotations

from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from recdigits import (
    ArrayStream, DigitOutOfRange, DigitStream, InitialValue, SegmentedStream, check_commutation,
    eval_x, normalize_word, phi, phi_windowed, psi_stream, shift_stream, split_unit, theta,
    validate_companion,
)


def test_normalize_word():
    assert normalize_word([1, 0, -1, 0, 0]).digits == (1, 0, -1)
    assert normalize_word([]).digits == ()
    assert normalize_word([0, 0]).digits == ()
    with pytest.raises(DigitOutOfRange):
        normalize_word([2], B=1)


def test_stream_rejects_large_digits(base2):
    with pytest.raises(DigitOutOfRange):
        DigitStream.from_word(base2, [0, 2])


def test_phi_examples(base2):
    s = DigitStream.from_word(base2, [1])
    assert phi(s, 0) == (Fraction(1, 2), 0)
    assert phi(s, 1) == (Fraction(0), 0)
    assert phi(s, -1) == (Fraction(1, 4), 0)


def test_theta_examples(base2, golden):
    assert theta(DigitStream.from_word(base2, [1])).coords == ((Fraction(1, 2),),)
    assert theta(DigitStream.zero(base2)).is_zero()
    v = theta(DigitStream.from_word(golden, [1])).coords[0][0]
    with mpmath.workprec(200):
        s5 = mpmath.sqrt(5)
        assert abs(v - 1 / (((1 + s5) / 2) * s5)) < 1e-28


def test_shift_examples(base2):
    s = DigitStream.from_word(base2, [1])
    t = shift_stream(s, 1)
    assert t.digits(-3, 3) == [0, 0, 1, 0, 0, 0]
    assert shift_stream(s, 0) is s
    assert shift_stream(t, -1).digits(-3, 3) == s.digits(-3, 3)


def test_commutation_examples(base2, golden):
    rep = check_commutation(base2, DigitStream.from_word(base2, [1]))
    assert rep["pass"] and rep["lhs"] == rep["rhs"] == "1"
    assert check_commutation(base2, DigitStream.zero(base2))["pass"]
    assert float(check_commutation(golden, DigitStream.from_word(golden, [1]))["distance"]) < 1e-20


@pytest.mark.parametrize("poly, k", [([-1, -1, 1], 0), ([14, -8, 1], 0), ([25, -8, 1], 0), ([-2, 1], 1)])
def test_commutation_random_words(poly, k):
    spec = validate_companion(poly, k)
    rng = np.random.default_rng(7)
    for _ in range(5):
        word = rng.integers(-spec.B, spec.B + 1, size=40)
        s = ArrayStream(spec, word, int(rng.integers(-10, 10)))
        assert check_commutation(spec, s)["pass"]


def test_canonical_identity_golden(golden):
    g = InitialValue.constant(golden, mpmath.mpf("0.7071"))
    s = psi_stream(g)
    for m in range(-5, 60):
        v, err = phi(s, m, 1e-30)
        x, _ = eval_x(g, m)
        with mpmath.workprec(200):
            d = abs(split_unit(v).e - split_unit(x).e)
            assert min(d, 1 - d) < 1e-25


def test_windowed_matches_high_precision(golden, real_pair):
    for spec in (golden, real_pair):
        s = DigitStream.random(spec, 3, -20, 400)
        vals, errs = phi_windowed(s, -30, 420)
        for i, m in enumerate(range(-30, 420, 37)):
            v, _ = phi(s, m, 1e-30)
            j = m + 30
            assert abs(vals[j] - float(v)) <= errs[j]
            assert errs[j] < 1e-12


def test_segmented_stream_layout(base2):
    seg = SegmentedStream(base2, [(0, 6, [1, -1]), (6, 9, None), (9, 12, [1, 0, 1])])
    assert seg.digits(-1, 13) == [0, 1, -1, 1, -1, 1, -1, 0, 0, 0, 1, 0, 1, 0]
    assert seg.nonzero_end() == 12
    assert seg.truncate(7).digits(0, 9) == [1, -1, 1, -1, 1, -1, 0, 0, 0]


def test_text_round_trip(golden):
    s = ArrayStream(golden, np.array([1, 0, -1, 1]), -2)
    t = DigitStream.from_text(golden, s.to_text())
    assert t.lo == -2 and t.digits(-3, 3) == s.digits(-3, 3)


@given(st.lists(st.integers(-1, 1), min_size=1, max_size=60), st.integers(-20, 20))
def test_theta_of_word_reproduces_phi(word, start):
    # theta inverts phi: the orbit of theta(s) has e-values phi_m(s) for finite s
    spec = validate_companion([-2, 1])
    s = DigitStream.from_word(spec, word, start)
    g = theta(s)
    for m in range(start - 3, start + len(word) + 3):
        v, _ = phi(s, m)
        x, _ = eval_x(g, m)
        assert (x - v).denominator == 1


@given(st.lists(st.integers(-4, 4), min_size=1, max_size=40), st.integers(-10, 10), st.integers(-5, 5))
def test_shift_commutes_with_theta_k1(word, start, steps):
    spec = validate_companion([-2, 1], 1)
    s = DigitStream.from_word(spec, word, start)
    from recdigits import shift_value
    assert theta(shift_stream(s, steps)).coords == shift_value(theta(s), steps).coords


@given(st.lists(st.integers(-1, 1), min_size=1, max_size=80), st.integers(-30, 30))
def test_windowed_values_within_their_bounds(word, start):
    spec = validate_companion([-2, 1])
    s = DigitStream.from_word(spec, word, start)
    vals, errs = phi_windowed(s, start - 5, start + len(word) + 5)
    for i, m in enumerate(range(start - 5, start + len(word) + 5)):
        exact, _ = phi(s, m)
        assert abs(Fraction(float(vals[i])) - exact) <= Fraction(float(errs[i]))
