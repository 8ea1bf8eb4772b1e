from __future__ import annotations

import mpmath
import pytest

from recdigits import (
    ConstantPolynomial, MultipleRoots, NotMonic, UnitCircleRoot, ZeroConstantTerm,
    compute_roots, parse_poly, validate_companion,
)
from recdigits.algebra import poly_mul, poly_pow


def test_real_quadratic_companion_data(real_pair):
    assert real_pair.D == 2
    assert real_pair.A == (14, -8, 1)
    # B = floor(sum |A_l| / 2) = floor(23 / 2)
    assert real_pair.B == 11
    assert (real_pair.p, real_pair.r1, real_pair.r2) == (2, 2, 0)


def test_base_two_alphabet(base2):
    assert base2.D == 1 and base2.A == (-2, 1) and base2.B == 1
    assert base2.is_integer_base and base2.base == 2


def test_exponent_offset_raises_degree(base2_k1):
    assert base2_k1.D == 2
    assert base2_k1.A == tuple(poly_pow([-2, 1], 2)) == (4, -4, 1)


@pytest.mark.parametrize("poly, exc", [
    ([4, -4, 1], MultipleRoots),
    ([1, 2], NotMonic),
    ([1], ConstantPolynomial),
    ([0, 1], ZeroConstantTerm),
    ([-1, 1], UnitCircleRoot),
    ([1, 0, 1], UnitCircleRoot),
])
def test_assumption_violations(poly, exc):
    with pytest.raises(exc):
        validate_companion(poly)


def test_roots_real_pair_against_quadratic_formula(real_pair):
    with mpmath.workprec(200):
        expected = sorted([4 + mpmath.sqrt(2), 4 - mpmath.sqrt(2)])
        got = sorted(mpmath.re(z) for z in real_pair.roots.roots)
        for a, b in zip(got, expected):
            assert abs(a - b) < mpmath.mpf(10) ** -30


def test_roots_golden(golden):
    with mpmath.workprec(200):
        phi = (1 + mpmath.sqrt(5)) / 2
        large, small = golden.roots.roots
        assert abs(large - phi) < 1e-40
        assert abs(small - (1 - phi)) < 1e-40
    assert (golden.p, golden.r1, golden.r2) == (1, 1, 0)


def test_base_two_root_is_exact(base2):
    assert base2.int_roots == (2,)
    assert base2.roots.errors[0] == 0


def test_complex_pair_classification(complex_pair):
    assert (complex_pair.p, complex_pair.r1, complex_pair.r2) == (2, 0, 1)
    for z in complex_pair.roots.roots:
        assert abs(abs(z) - 5) < 1e-30


def test_root_errors_meet_target():
    rs = compute_roots([15, -5, -3, 1], 1e-50)
    assert all(e <= 1e-50 for e in rs.errors)
    with mpmath.workprec(256):
        for z in rs.roots:
            assert abs(mpmath.polyval([1, -3, -5, 15], z)) < 1e-40


def test_parse_poly_and_product():
    assert parse_poly(" -1, -1 ,1") == [-1, -1, 1]
    assert poly_mul([-2, 1], [-2, 1]) == [4, -4, 1]
    with pytest.raises(ValueError):
        parse_poly("")


def test_spec_json_shape(real_pair):
    js = real_pair.to_json()
    assert js["B"] == 11 and js["p"] == 2 and js["D"] == 2
    assert all(isinstance(r["re"], str) for r in js["roots"])
