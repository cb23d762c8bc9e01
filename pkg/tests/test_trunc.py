import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_lab.errors import BadTheta, BudgetExceeded, ConfigError, WindowTooSmall
from spectral_lab.trunc import (build_triple, fourier_operator, frohlich_ratio, matrix_element_means,
                                projection_size, report_csv, snap_grid, szego_functional, tau, torus_element,
                                truncation_functional, unit_ball_volume, weyl_counting, widom_defect, widom_ratio)

COS = {1: 0.5, -1: 0.5}


def t_cos(triple):
    return fourier_operator(triple, COS)


def test_circle_dirac():
    t = build_triple("circle", 2)
    np.testing.assert_array_equal(t.dirac, [-2, -1, 0, 1, 2])
    np.testing.assert_array_equal(t.boundaries(), [0, 1, 2])


def test_bad_theta_rejected():
    with pytest.raises(BadTheta):
        build_triple("nctorus", 3, 2, np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ConfigError):
        build_triple("sphere", 3)


def test_commutative_torus_relations():
    t = build_triple("nctorus", 4, 2, 0.0)
    e1, e2 = torus_element(t, {(1, 0): 1.0}), torus_element(t, {(0, 1): 1.0})
    e12 = torus_element(t, {(1, 1): 1.0})
    interior = np.flatnonzero(np.abs(t.labels).max(axis=1) <= 2)
    np.testing.assert_allclose((e1 @ e2).toarray()[:, interior], e12.toarray()[:, interior], atol=1e-15)


@given(st.floats(-3, 3))
def test_torus_commutation_phase(theta):
    t = build_triple("nctorus", 4, 2, theta)
    u1, u2 = torus_element(t, {(1, 0): 1.0}), torus_element(t, {(0, 1): 1.0})
    interior = np.flatnonzero(np.abs(t.labels).max(axis=1) <= 2)
    lhs = (u1 @ u2).toarray()[:, interior]
    rhs = np.exp(1j * theta) * (u2 @ u1).toarray()[:, interior]
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_torus_trace_and_interior_diagonal():
    coeffs = {(0, 0): 0.3, (1, 2): 1.0, (-1, 0): 2.0 - 1j}
    assert tau(coeffs, 2) == 0.3
    assert tau({(1, 0): 1.0}, 2) == 0
    t = build_triple("nctorus", 6, 2, 0.7)
    a = torus_element(t, coeffs)
    interior = np.abs(t.labels).max(axis=1) <= 3
    np.testing.assert_allclose(a.diagonal()[interior], 0.3, atol=1e-15)


def test_truncation_functional_examples():
    t = build_triple("circle", 50)
    ident = fourier_operator(t, {0: 1.0})
    np.testing.assert_allclose(truncation_functional(t, ident).values, 1.0)
    mf = fourier_operator(t, {0: 0.25, 1: 0.5, -3: 2.0})
    np.testing.assert_allclose(truncation_functional(t, mf).values, 0.25, atol=1e-15)
    tp = build_triple("toeplitz", 200)
    phi = fourier_operator(tp, {0: 1.0, **COS})
    np.testing.assert_allclose(truncation_functional(tp, phi).values, 1.0)


def test_means_agree_with_truncation_at_boundaries():
    t = build_triple("circle", 64)
    rep = matrix_element_means(t, fourier_operator(t, {0: 0.4, 2: 1.0}))
    assert rep.boundary_gap <= 1e-12
    tp = build_triple("toeplitz", 4096)
    m = matrix_element_means(tp, t_cos(tp))
    assert abs(m.diagnostics.transforms["logmean"][-1]) <= 0.02


def test_snap_grid():
    t = build_triple("circle", 10)
    np.testing.assert_array_equal(snap_grid(t, [0.5, 2.7, 3.0]), [0, 2, 3])
    assert projection_size(t, 3) == 7
    with pytest.raises(WindowTooSmall):
        snap_grid(t, [11])


def test_widom_identity_is_zero():
    t = build_triple("circle", 20)
    ident = fourier_operator(t, {0: 1.0})
    assert np.all(widom_ratio(t, ident, ident).values == 0)


def test_widom_unit_shift_single_leak():
    t = build_triple("circle", 30)
    a = fourier_operator(t, {1: 1.0})
    b = fourier_operator(t, {-1: 1.0})
    lams = np.arange(0, 30)
    rep = widom_ratio(t, a, b, lams)
    np.testing.assert_allclose(rep.values, 1.0 / (2 * lams + 1), rtol=1e-14)


def test_widom_toeplitz_decay():
    t = build_triple("toeplitz", 256)
    rep = widom_ratio(t, t_cos, t_cos, np.arange(8, 200, 8))
    assert rep.decay_exponent >= 0.9
    # the half window loses its complement at lambda = K/2, which bounds the bias
    assert rep.bias is not None and rep.bias <= 1.0 / 129 + 1e-12


@given(st.integers(0, 2**31), st.integers(1, 9))
def test_widom_cauchy_schwarz(seed, lam):
    rng = np.random.Generator(np.random.Philox(key=seed))
    t = build_triple("circle", 10)
    n = t.dim
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    val = widom_ratio(t, a, b, [lam]).values[0] * projection_size(t, lam)
    inside = np.abs(t.dirac) <= lam
    left = a[np.ix_(inside, ~inside)]
    right = b[np.ix_(~inside, inside)]
    assert abs(val) <= np.linalg.norm(left) * np.linalg.norm(right) + 1e-10


@given(st.integers(0, 2**31), st.integers(0, 9))
def test_traciality(seed, lam):
    rng = np.random.Generator(np.random.Philox(key=seed))
    t = build_triple("circle", 10)
    n = t.dim
    a, b = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    p = np.diag((np.abs(t.dirac) <= lam).astype(float))
    assert np.trace(p @ a @ p @ b @ p) == pytest.approx(np.trace(p @ b @ p @ a @ p), abs=1e-12)


def test_szego_examples():
    t = build_triple("toeplitz", 512)
    rep = szego_functional(t, t_cos, lambda x: x**2, [64, 256, 512])
    assert abs(rep.values[-1] - 0.5) <= 0.005
    a = t_cos(t).toarray()[:101, :101]
    brute = np.sum(np.linalg.eigvalsh(a) ** 2) / 101
    np.testing.assert_allclose(szego_functional(t, t_cos, lambda x: x**2, [100]).values, brute, rtol=1e-12)
    np.testing.assert_allclose(szego_functional(t, np.zeros((513, 513)), lambda x: x**2).values, 0.0)
    lin = szego_functional(t, fourier_operator(t, {0: 0.3, **COS}), lambda x: x, [10, 100])
    np.testing.assert_allclose(lin.values, truncation_functional(t, fourier_operator(t, {0: 0.3}), [10, 100]).values)
    with pytest.raises(ConfigError):
        szego_functional(t, t_cos, np.cos)


@pytest.mark.parametrize("k", [2, 3])
def test_szego_polynomial_matches_widom_identity(k):
    t = build_triple("toeplitz", 128)
    phi = {0: 0.2, **COS}
    a = fourier_operator(t, phi).toarray()
    lams = [16, 32, 64]
    sz = szego_functional(t, a, lambda x: x**k, lams).values
    defect = widom_defect(t, a, k, lams).values
    ak = np.linalg.matrix_power(a, k)
    direct = np.array([np.trace(ak[: int(l) + 1, : int(l) + 1]) / (int(l) + 1) for l in lams])
    np.testing.assert_allclose(sz, direct - defect, atol=1e-12)


def test_widom_defect_decay():
    t = build_triple("toeplitz", 512)
    rep = widom_defect(t, t_cos, 2, np.arange(16, 512, 16))
    assert rep.decay_exponent >= 0.9


def test_frohlich_examples():
    ts = [1.0, 0.1, 0.01]
    t = build_triple("circle", 2000)
    np.testing.assert_allclose(frohlich_ratio(t, fourier_operator(t, {0: 1.0}), ts).values, 1.0)
    np.testing.assert_allclose(frohlich_ratio(t, fourier_operator(t, {0: 0.7, 1: 3.0}), ts).values, 0.7)
    tp = build_triple("toeplitz", 2000)
    np.testing.assert_allclose(frohlich_ratio(tp, t_cos(tp), ts).values, 0.0)
    with pytest.raises(ConfigError):
        frohlich_ratio(t, fourier_operator(t, {0: 1.0}), [0.0])


def test_weyl_counting():
    one = weyl_counting(1, 400)
    for lam in (0, 1, 3.9, 4, 50, 400):
        assert one.count(lam) == 2 * math.isqrt(int(lam)) + 1
    two = weyl_counting(2, 1e4)
    assert two.count(0) == 1
    assert abs(two.count(1e4) / 1e4 - math.pi) <= 0.05
    assert two.unit_ball_volume == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert np.all(np.diff(two.counts) > 0)
    with pytest.raises(BudgetExceeded):
        weyl_counting(6, 1e6)


def test_report_csv_header():
    t = build_triple("circle", 4)
    text = report_csv(truncation_functional(t, fourier_operator(t, {0: 1.0})))
    assert text.splitlines()[0] == "lambda,trace_p,value,reference,bias"
