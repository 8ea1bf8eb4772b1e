from __future__ import annotations

import numpy as np
import pytest

from recdigits import psi_digits, validate_companion
from recdigits.sources import (
    canonical_from_expansion, champernowne_stream, champernowne_value, expansion_digits,
    random_seed_stream, random_value,
)


def _concat_words(b, total, balanced):
    """Plain string construction of the expansion, used as an oracle."""
    out = []
    L = 1
    while len(out) < total:
        for w in range(b ** L):
            digits = []
            x = w
            for _ in range(L):
                digits.append(x % b)
                x //= b
            digits.reverse()
            out.extend(digits)
            if balanced:
                out.extend(b - 1 - d for d in digits)
        L += 1
    return out[:total]


def _classic(b, total):
    out = []
    n = 1
    while len(out) < total:
        digits = []
        x = n
        while x:
            digits.append(x % b)
            x //= b
        out.extend(reversed(digits))
        n += 1
    return out[:total]


@pytest.mark.parametrize("b", [2, 3, 5])
def test_expansion_matches_string_oracle(b):
    assert expansion_digits(b, 0, 3000, "balanced").tolist() == _concat_words(b, 3000, True)
    assert expansion_digits(b, 0, 3000, "words").tolist() == _concat_words(b, 3000, False)
    assert expansion_digits(b, 0, 3000, "classic").tolist() == _classic(b, 3000)


def test_expansion_windows_are_consistent():
    full = expansion_digits(2, 0, 5000)
    assert expansion_digits(2, 1234, 4321).tolist() == full[1234:4321].tolist()


def test_base2_balanced_prefix():
    assert expansion_digits(2, 0, 12).tolist() == [0, 1, 1, 0, 0, 0, 1, 1, 0, 1, 1, 0]


@pytest.mark.parametrize("b", [2, 3])
def test_canonical_digits_match_rounding_definition(b):
    spec = validate_companion([-b, 1])
    g = champernowne_value(spec, 400)
    stream = champernowne_stream(spec)
    assert stream.window(0, 300).tolist() == psi_digits(g, 0, 299)


def test_canonical_from_expansion_bounds():
    d = expansion_digits(3, 0, 2000)
    s = canonical_from_expansion(3, d[:1500], d[1500:])
    assert np.abs(s).max() <= 2


def test_odd_base_needs_lookahead():
    # a long run of the middle digit leaves rounding undecided
    d = np.array([1, 1, 1], dtype=np.int64)
    with pytest.raises(ValueError):
        canonical_from_expansion(3, d, np.array([1, 1], dtype=np.int64))


def test_champernowne_needs_integer_base(golden):
    with pytest.raises(ValueError):
        champernowne_stream(golden)


def test_random_values_are_reproducible(real_pair):
    a = random_value(real_pair, 7)
    b = random_value(real_pair, 7)
    assert a.coords == b.coords
    assert random_value(real_pair, 8).coords != a.coords


@pytest.mark.parametrize("poly", [[-2, 1], [14, -8, 1], [-1, -1, 1]])
def test_random_seed_streams_do_not_degenerate(poly):
    spec = validate_companion(poly)
    s, g = random_seed_stream(spec, 3)
    assert s.lo >= 0
    tail = s.window(1500, 2000)
    assert np.count_nonzero(tail) > 50
