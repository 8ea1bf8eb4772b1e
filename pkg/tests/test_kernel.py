from __future__ import annotations

from fractions import Fraction

import mpmath
import pytest

from recdigits import decay_bound, h_vector, rho, rho_quadrature_oracle, rho_table, validate_companion
from recdigits.kernel import rho_branch, rho_floats, rho_suffix_exact


def _mp(v):
    with mpmath.workprec(256):
        return mpmath.mpf(v.numerator) / v.denominator if isinstance(v, Fraction) else mpmath.mpmathify(v)


def test_base_two_values(base2):
    assert rho(base2, 1) == (Fraction(0), 0)
    assert rho(base2, 0) == (Fraction(1, 2), 0)
    for n in range(0, 30):
        assert rho(base2, -n)[0] == Fraction(1, 2 ** (n + 1))


def test_golden_values_against_closed_form(golden):
    # rho_n = psi^(n-1)/sqrt5 for n >= 1 and phi^(n-1)/sqrt5 for n <= 1
    with mpmath.workprec(200):
        s5 = mpmath.sqrt(5)
        phi = (1 + s5) / 2
        psi = (1 - s5) / 2
        for n in range(1, 25):
            v, err = rho(golden, n, 1e-40)
            assert abs(v - psi ** (n - 1) / s5) < 1e-38
            assert err <= 1e-39
        for n in range(-25, 2):
            v, _ = rho(golden, n, 1e-40)
            assert abs(v - phi ** (n - 1) / s5) < 1e-38
    assert abs(float(rho(golden, 1)[0]) - 0.4472135955) < 1e-10


def test_branches_agree_on_overlap(golden, real_pair):
    # both residue branches are valid for 1 <= n <= D-1
    v1, _ = rho_branch(golden, 1, 1)
    v2, _ = rho_branch(golden, 1, 2)
    assert abs(v1 - v2) < 1e-35


@pytest.mark.parametrize("name, n, expected", [("base2", 0, 0.5), ("golden", 1, 0.4472135955), ("base2", 3, 0.0)])
def test_quadrature_oracle_examples(request, name, n, expected):
    spec = request.getfixturevalue(name)
    assert abs(float(rho_quadrature_oracle(spec, n, 4096)) - expected) < 1e-10


@pytest.mark.parametrize("poly", [[14, -8, 1], [25, -8, 1], [-1, -1, 1], [3, -1, -4, 1]])
def test_residues_match_quadrature(poly):
    spec = validate_companion(poly)
    for n in range(-6, 7):
        v, _ = rho(spec, n)
        q = rho_quadrature_oracle(spec, n, 4096)
        with mpmath.workprec(200):
            assert abs(_mp(v) - q) <= 1e-10 * max(abs(q), mpmath.mpf(1e-30)) + 1e-25


def test_rational_kernel_when_every_root_is_large(real_pair, complex_pair):
    for spec in (real_pair, complex_pair):
        for n in range(1, 5):
            assert rho(spec, n)[0] == 0
        for n in range(0, 12):
            v, err = rho(spec, -n)
            assert isinstance(v, Fraction) and err == 0
            with mpmath.workprec(200):
                assert abs(_mp(v) - rho_quadrature_oracle(spec, -n, 4096)) < 1e-20


def test_suffix_sum_matches_termwise(real_pair):
    digits = [3, -11, 0, 7, 1]
    direct = sum(d * rho(real_pair, -t)[0] for t, d in enumerate(digits))
    assert rho_suffix_exact(real_pair, digits) == direct
    with pytest.raises(ValueError):
        rho_suffix_exact(validate_companion([-1, -1, 1]), digits)


def test_residue_coefficients(base2, golden):
    assert h_vector(base2).coeffs == ((Fraction(1, 2),),)
    with mpmath.workprec(200):
        s5 = mpmath.sqrt(5)
        phi = (1 + s5) / 2
        assert abs(h_vector(golden).coeffs[0][0] - 1 / (phi * s5)) < 1e-40
    assert abs(float(h_vector(golden).coeffs[0][0]) - 0.2763932023) < 1e-10


def test_residue_polynomial_degree(base2_k1):
    h = h_vector(base2_k1)
    assert len(h.coeffs[0]) == 2  # degree k = 1


def test_decay_envelope(base2, golden):
    d2 = decay_bound(base2)
    for m in range(0, 60):
        assert d2.bound(-m) >= 2.0 ** (-m - 1)
    dg = decay_bound(golden)
    assert 0.618 < dg.delta < 0.6181
    for n in range(-40, 41):
        assert abs(float(rho(golden, n)[0])) <= dg.bound(n)


@pytest.mark.parametrize("poly, k", [([-2, 1], 0), ([-2, 1], 1), ([-1, -1, 1], 0), ([14, -8, 1], 0),
                                     ([25, -8, 1], 0), ([3, -1, -4, 1], 0), ([-1, -1, 1], 1)])
def test_envelope_is_strict_and_dominates(poly, k):
    spec = validate_companion(poly, k)
    dec = decay_bound(spec)
    assert dec.delta < 1
    for n in range(-30, 31):
        assert abs(float(_mp(rho(spec, n)[0]))) <= dec.bound(n) * (1 + 1e-9)


def test_recurrence_identity_small_range(golden, base2_k1):
    for spec in (golden, base2_k1):
        for n in range(-10, 11):
            with mpmath.workprec(200):
                tot = sum(a * _mp(rho(spec, n + l, 1e-40)[0]) for l, a in enumerate(spec.A))
            assert abs(tot - (-1 if n == 0 else 0)) < 1e-30


def test_float_table_matches(golden):
    arr = rho_floats(golden, -20, 20)
    tab = rho_table(golden, 1e-40)
    for n in range(-20, 21):
        assert arr[n + 20] == pytest.approx(float(_mp(tab.get(n)[0])), rel=1e-15, abs=1e-300)
