import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_lab.dos import block_sequence
from spectral_lab.errors import EmptyInput, NotPositive, TooShort
from spectral_lab.summation import (abel_functional, cesaro, checkpoints, convergence_verdict, diagnose,
                                    dixmier_partial, harmonic_ratio, level_functional, log_mean, matched_scale,
                                    read_series_csv, series_csv, subsequence_values, weighted_mean)


def test_constant_sequence_is_fixed():
    x = np.full(100, 2.5)
    np.testing.assert_allclose(cesaro(x), 2.5)
    np.testing.assert_allclose(log_mean(x[:1]), 2.5 / math.log(2))
    # the log-mean of a constant tends to the constant at rate 1/log n
    assert abs(log_mean(np.full(2**20, 2.5))[-1] - 2.5) < 2.5 * 1.0 / math.log(2**20)


def test_alternating_cesaro_vanishes():
    x = (-1.0) ** np.arange(10001)
    assert abs(cesaro(x)[-1]) < 1e-3


def test_block_sequence_transforms():
    lam = block_sequence(2**21)
    c = cesaro(lam)
    for m in (8, 9, 10):
        assert abs(c[2 ** (2 * m)] - 2 / 3) <= 0.01
        assert abs(c[2 ** (2 * m + 1)] - 1 / 3) <= 0.01
    assert abs(log_mean(lam)[2**20] - 0.5) <= 0.02


def test_dixmier_partials():
    k = np.arange(2**18)
    assert abs(dixmier_partial(1.0 / (k + 1))[-1] - 1.0) < 0.05
    assert dixmier_partial((k + 1.0) ** -2)[-1] < 0.2


def test_checkpoints_are_dyadic():
    np.testing.assert_array_equal(checkpoints(20), [1, 2, 4, 8, 16])
    assert checkpoints(0).size == 0


def test_verdicts():
    v = convergence_verdict(np.full(64, 3.0))
    assert v.kind == "converged" and v.value == 3.0
    v = convergence_verdict((-1.0) ** np.arange(64))
    assert v.kind == "oscillating" and (v.liminf, v.limsup) == (-1.0, 1.0)
    v = convergence_verdict(np.log1p(np.arange(64.0)))
    assert v.kind == "undecided"
    with pytest.raises(TooShort):
        convergence_verdict(np.ones(4), window=4)


def test_block_cesaro_verdict_oscillates():
    v = diagnose(block_sequence(2**20), window=4).verdicts["cesaro"]
    assert v.kind == "oscillating"
    assert abs(v.liminf - 1 / 3) < 0.02 and abs(v.limsup - 2 / 3) < 0.02


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=40, max_size=200), st.floats(1e-4, 1.0))
def test_verdict_invariants(xs, tol):
    v = convergence_verdict(np.array(xs), window=3, tol=tol)
    assert v.liminf <= v.limsup
    if v.kind == "converged":
        assert v.spread <= tol


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=100))
def test_cesaro_is_bounded_by_range(xs):
    c = cesaro(np.array(xs))
    assert np.all(c >= min(xs) - 1e-9) and np.all(c <= max(xs) + 1e-9)


def test_log_to_cesaro_gap_shrinks_like_inverse_log():
    lam = block_sequence(2**20)
    gap = np.abs(log_mean(lam) - log_mean(cesaro(lam)))
    cps = checkpoints(2**20)[8:]
    scaled = gap[cps] * np.log(cps + 2.0)
    # |M(x) - M(C(x))| = O(1/log n): the scaled gap stays bounded
    assert scaled.max() < 1.0
    assert gap[2**20] < gap[2**10]


@pytest.mark.xfail(strict=True, reason="the gap at n = 2^20 is about 0.031; the 1/log n rate is too slow for 0.01")
def test_log_to_cesaro_gap_within_hundredth_at_2_20():
    lam = block_sequence(2**20)
    assert abs(log_mean(lam)[2**20] - log_mean(cesaro(lam))[2**20]) <= 0.01


def test_weighted_mean_and_subsequence():
    np.testing.assert_allclose(weighted_mean([1.0, 3.0], [1.0, 1.0]), [1.0, 2.0])
    with pytest.raises(NotPositive):
        weighted_mean([1.0], [-1.0])
    np.testing.assert_array_equal(subsequence_values(np.arange(10.0), [2, 5, 8], [5, 7, 9]), [5, 5, 8])


def test_harmonic_ratio_on_squares():
    a = (np.arange(1, 2001) ** 2).astype(float)
    assert 0.9 <= harmonic_ratio(a)[-1] <= 1.1


def test_abel_and_level_examples():
    n = 10**5
    diag = 1.0 / (np.arange(n) + 1)
    eps = np.array([1e-2, 1e-3, 1e-4])
    np.testing.assert_allclose(level_functional(None, diag, eps), eps * np.floor(1 / eps), rtol=1e-12)
    assert np.all(abel_functional(np.zeros(n), diag, [1.1, 1.5]) == 0)
    assert np.all(level_functional(np.zeros(n), diag, eps) == 0)
    s, e = matched_scale(n)
    ab = abel_functional(None, diag, [s])[0]
    lv = level_functional(None, diag, [e])[0]
    zeta_oracle = (s - 1) * sum(k**-s for k in range(1, n + 1))
    assert ab == pytest.approx(zeta_oracle, rel=1e-10)
    assert abs(ab - lv) <= 0.05


def test_abel_with_matrix_arguments(rng):
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    lam = np.array([1.0, 0.5, 0.25, 0.2, 0.1])
    b = (q * lam) @ q.T
    a = rng.standard_normal((5, 5))
    expected = (1.3 - 1) * np.trace(a @ (q * lam**1.3) @ q.T)
    assert abel_functional(a, b, [1.3])[0] == pytest.approx(expected, rel=1e-10)
    with pytest.raises(NotPositive):
        abel_functional(None, -b, [1.3])


def test_empty_input_rejected():
    with pytest.raises(EmptyInput):
        cesaro([])


def test_series_csv_round_trip(tmp_path):
    diag = diagnose(block_sequence(64), window=3)
    path = tmp_path / "s.csv"
    path.write_text(series_csv(diag))
    np.testing.assert_array_equal(read_series_csv(path), block_sequence(64))
