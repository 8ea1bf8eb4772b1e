from __future__ import annotations

from fractions import Fraction as F

import numpy as np
import pytest

from recdigits import (
    HorizonExceeded, LengthBeyondStages, SeedRejected, build_schedule, coordinate_tail_bound,
    emit_p_stream, enumerate_intervals, is_good, parse_beta, pi_value, seed_digits,
    validate_companion, verify_convergent_case, verify_divergent_case,
)
from recdigits.reduction import certify_prefixes, digit_at, minimal_level, prefix_counts, stage_layout
from recdigits.digits import ArrayStream
from recdigits.equidist import count_hits_stream


@pytest.fixture(scope="module")
def base2_seed(base2):
    return seed_digits(base2, "auto", horizon=10_000)


def test_parse_beta_forms():
    assert parse_beta("const:3")(7) == 3
    assert parse_beta("linear")(7) == 7
    lst = parse_beta("list:1,5,2")
    assert [lst(n) for n in range(1, 6)] == [1, 5, 2, 2, 2]
    assert [lst.prime(n) for n in range(1, 6)] == [1, 2, 2, 2, 2]
    assert [parse_beta("const:2").prime(n) for n in (1, 2, 3)] == [1, 2, 2]
    for bad in ("const:", "const:0", "foo:1", "list:a", "const:1,2"):
        with pytest.raises(ValueError):
            parse_beta(bad)


def test_base2_certificate(base2_seed):
    _, cert = base2_seed
    assert cert.source == "champernowne:balanced"
    assert {n: cert.candidate(n) for n in range(1, 8)} == {1: 2, 2: 4, 3: 13, 4: 76, 5: 275, 6: 8533, 7: None}


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_certificate_agrees_with_goodness(base2, base2_seed, n):
    s, cert = base2_seed
    c = cert.candidate(n)
    eps = F(1, 2 ** (n + 1))
    for m in (c, c + 1, 2 * c + 3, 10_000):
        assert is_good(s.window(0, m), n, eps, base2)[0]
    assert not is_good(s.window(0, c - 1), n, eps, base2)[0]


def test_prefix_counts_against_direct_counting(real_pair):
    rng = np.random.default_rng(5)
    digits = rng.integers(-3, 4, size=400)
    s = ArrayStream(real_pair, digits, 0)
    intervals = enumerate_intervals(3)
    counts, unc = prefix_counts(s, 400, intervals)
    for m in (1, 17, 200, 400):
        word = ArrayStream(real_pair, digits[:m], 0)
        for j, I in enumerate(intervals):
            assert counts[j, m] == count_hits_stream(word, I, 0, m).count_in
    assert int(np.asarray(unc).sum()) == 0


def test_zero_seed_rejected(base2):
    with pytest.raises(SeedRejected):
        seed_digits(base2, "zero", horizon=1000)
    with pytest.raises(ValueError):
        seed_digits(base2, "zero", horizon=10)


def test_linear_schedule_tables(base2, base2_seed):
    _, cert = base2_seed
    sch = build_schedule("linear", base2, cert, "demo", K=4, stages=4)
    assert sch.a[1:] == [5, 66, 579, 4100, 25605]
    assert sch.b[1:] == [53, 141, 1602, 78126]
    assert sch.c[1:] == [5, 33, 193, 1025, 5121]
    assert sch.V[1:] == [530, 14489, 1251233, 401646983]
    assert all(sch.checks.values())
    r = sch.ratios()
    assert all(x > y for x, y in zip(r, r[1:]))


def test_constant_schedule_tables(base2, base2_seed):
    _, cert = base2_seed
    sch = build_schedule("const:2", base2, cert, "demo", K=4, stages=3)
    assert sch.a[1:] == [5, 66, 386, 2050]
    assert sch.b[1:] == [53, 129, 2206]
    assert sch.V[3] == 1290575
    table = sch.to_json()["tables"]
    assert table["V"][-1] == "1290575"


def test_schedule_runs_out_of_certified_lengths(base2, base2_seed):
    _, cert = base2_seed
    with pytest.raises(HorizonExceeded):
        build_schedule("linear", base2, cert, "demo", K=4, stages=6)


def test_stream_layout_and_bookkeeping(base2, base2_seed):
    s, cert = base2_seed
    sch = build_schedule("const:2", base2, cert, "demo", K=4, stages=2)
    layout = stage_layout(sch)
    assert layout[0] == {"n": 1, "word_start": 0, "zero_start": 5 * 53, "end": 5 * 53 + 53 * 5}
    assert layout[-1]["end"] == sch.V[2]
    stream = emit_p_stream(sch, s)
    window = stream.window(0, sch.V[2])
    for idx in (0, 4, 5, 264, 265, 529, 530, 531, 530 + 66 * 129 - 1, sch.V[2] - 1):
        assert window[idx] == digit_at(sch, s, idx)
    word = s.window(0, 5)
    assert window[:265].tolist() == np.tile(word, 53).tolist()
    assert not window[265:530].any()
    with pytest.raises(LengthBeyondStages):
        emit_p_stream(sch, s, sch.V[2] + 1)
    with pytest.raises(LengthBeyondStages):
        digit_at(sch, s, sch.V[2])


def test_pi_value_stable_under_longer_horizon(base2, base2_seed):
    s, cert = base2_seed
    sch = build_schedule("const:2", base2, cert, "demo", K=4, stages=3)
    short = pi_value(sch, s, sch.V[2])
    longer = pi_value(sch, s, sch.V[3])
    assert short.distance(longer) <= coordinate_tail_bound(base2, sch.V[2]) + F(1, 10 ** 25)


def test_tail_bound_shrinks(golden):
    assert coordinate_tail_bound(golden, 2000) < coordinate_tail_bound(golden, 1000) < 1e-100


def test_minimal_level():
    assert [minimal_level(M) for M in (1, 2, 3, 7)] == [6, 6, 7, 8]


def test_divergent_verifier_passes(base2, base2_seed):
    s, cert = base2_seed
    sch = build_schedule("const:2", base2, cert, "demo", K=4, stages=3)
    rep = verify_divergent_case(sch, s)
    assert rep["ell"] == 6 and rep["status"] == "pass"
    for row in rep["checkpoints"]:
        assert F(row["lambda"], int(row["V"])) >= F(1, 12)
        assert row["zero_stream_count"] == row["zero_block_length"]


def test_single_checkpoint_is_inconclusive(base2, base2_seed):
    s, cert = base2_seed
    sch = build_schedule("linear", base2, cert, "demo", K=4, stages=2)
    assert verify_convergent_case(sch, s, checkpoints=[2])["status"] == "inconclusive"


def test_random_seed_accepted_for_golden(golden):
    s, cert = seed_digits(golden, "random", horizon=10_000, seed=42)
    assert cert.source.startswith("random:")
    assert cert.candidate(1) is not None
    sch = build_schedule("const:2", golden, cert, "demo", K=4, stages=2)
    assert all(sch.checks.values())
