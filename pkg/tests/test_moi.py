import math
from collections import Counter
from itertools import combinations_with_replacement

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_lab.divdiff import exp_symbol, heat_symbol, power_symbol
from spectral_lab.errors import BudgetExceeded, ConfigError, OrderUnavailable
from spectral_lab.moi import (MoiBudget, compositions, delta_expansion, expansion_coefficient, gateaux_derivative,
                              heat_trace_expansion, identity_residuals, moi_eval, multiset_coefficient,
                              shuffle_residuals, superscript_difference_residual, taylor_partial_sum,
                              taylor_remainder, taylor_remainder_term)
from spectral_lab.operators import apply_function, op_norm, random_hermitian

seeds = st.integers(0, 2**31)


def _gen(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def _complex(rng, d):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def test_order_zero_is_functional_calculus(rng):
    h = random_hermitian(rng, 4)
    np.testing.assert_allclose(moi_eval([h], [], exp_symbol()), apply_function(h, exp_symbol()), atol=1e-13)


def test_commuting_first_order():
    h = np.diag([1.0, 2.0])
    v = np.diag([0.3, -0.7])
    out = moi_eval([h, h], [v], exp_symbol())
    np.testing.assert_allclose(out, np.diag([math.e * 0.3, math.e**2 * -0.7]), atol=1e-13)


def test_commutator_identity_random_5x5(rng):
    for _ in range(5):
        a, b = random_hermitian(rng, 5), random_hermitian(rng, 5)
        res = identity_residuals(exp_symbol(), a, b)
        assert res.commutator_residual <= 1e-10 * (1 + op_norm(a) + op_norm(b)) * res.lipschitz * 10
        assert res.passed


def test_identity_residuals_trivial_cases(rng):
    a = random_hermitian(rng, 4)
    r = identity_residuals(exp_symbol(), a, np.eye(4))
    assert r.commutator_residual < 1e-12
    assert identity_residuals(exp_symbol(), a, a).perturbation_residual < 1e-12


def test_gateaux_square():
    rng = _gen(7)
    a, b = random_hermitian(rng, 4), random_hermitian(rng, 4)
    np.testing.assert_allclose(gateaux_derivative(power_symbol(2), a, b, 1), a @ b + b @ a, atol=1e-12)


def test_gateaux_commuting_diagonal():
    a, b = np.diag([0.1, 0.5, -0.4]), np.diag([1.0, -2.0, 0.5])
    for n in range(4):
        expected = apply_function(a, exp_symbol(), order=n) @ np.linalg.matrix_power(b, n) / math.factorial(n)
        np.testing.assert_allclose(gateaux_derivative(exp_symbol(), a, b, n), expected, atol=1e-12)


def test_gateaux_matches_finite_differences(rng):
    a, b = random_hermitian(rng, 4), random_hermitian(rng, 4)
    f, t = exp_symbol(), 1e-3
    second = (f.on_matrix(a + t * b) - 2 * f.on_matrix(a) + f.on_matrix(a - t * b)) / t**2 / 2
    np.testing.assert_allclose(gateaux_derivative(f, a, b, 2), second, atol=1e-5)


def test_taylor_zero_perturbation(rng):
    h = random_hermitian(rng, 4)
    z = np.zeros((4, 4))
    np.testing.assert_allclose(taylor_partial_sum(exp_symbol(), h, z, 3), apply_function(h, exp_symbol()), atol=1e-13)
    assert np.allclose(taylor_remainder_term(exp_symbol(), h, z, 3), 0)


def test_taylor_remainder_closed_form(rng):
    h, v = random_hermitian(rng, 4), 0.3 * random_hermitian(rng, 4)
    f = exp_symbol()
    exact = f.on_matrix(h + v) - taylor_partial_sum(f, h, v, 2)
    np.testing.assert_allclose(taylor_remainder_term(f, h, v, 2), exact, atol=1e-12)


def test_taylor_remainder_order(rng):
    h, v = random_hermitian(rng, 5), random_hermitian(rng, 5)
    rep = taylor_remainder(exp_symbol(), h, v, 2)
    assert rep.slope >= 2.8


@given(seeds)
def test_multilinearity(seed):
    rng = _gen(seed)
    hs = [random_hermitian(rng, 4) for _ in range(3)]
    v1, v2, w = _complex(rng, 4), _complex(rng, 4), _complex(rng, 4)
    al, be = 0.7 - 0.2j, -1.3
    f = exp_symbol()
    lhs = moi_eval(hs, [al * v1 + be * w, v2], f)
    rhs = al * moi_eval(hs, [v1, v2], f) + be * moi_eval(hs, [w, v2], f)
    assert op_norm(lhs - rhs) <= 1e-10 * (1 + op_norm(lhs))


@given(seeds)
def test_symbol_linearity(seed):
    rng = _gen(seed)
    hs = [random_hermitian(rng, 4) for _ in range(2)]
    v = _complex(rng, 4)
    phi = lambda x, y: np.exp(x) * y  # noqa: E731
    psi = lambda x, y: np.cos(x - y)  # noqa: E731
    lhs = moi_eval(hs, [v], lambda x, y: 2.0 * phi(x, y) - 0.5 * psi(x, y))
    rhs = 2.0 * moi_eval(hs, [v], phi) - 0.5 * moi_eval(hs, [v], psi)
    assert op_norm(lhs - rhs) <= 1e-12 * (1 + op_norm(lhs))


@given(seeds)
def test_separable_symbol_factorizes(seed):
    rng = _gen(seed)
    h0, h1 = random_hermitian(rng, 4), random_hermitian(rng, 4)
    v = _complex(rng, 4)
    out = moi_eval([h0, h1], [v], lambda x, y: np.exp(x) * np.sin(y))
    expected = apply_function(h0, np.exp) @ v @ apply_function(h1, np.sin)
    np.testing.assert_allclose(out, expected, atol=1e-11)


@pytest.mark.parametrize("n", [1, 2])
def test_commutator_shuffles(rng, n):
    for _ in range(3):
        hs = [random_hermitian(rng, 4) for _ in range(n + 1)]
        xs = [_complex(rng, 4) for _ in range(n)]
        res = shuffle_residuals(exp_symbol(), hs, xs, _complex(rng, 4), 0)
        assert max(res.values()) <= 1e-9


def test_superscript_difference(rng):
    for _ in range(3):
        hs = [random_hermitian(rng, 4) for _ in range(2)]
        xs = [_complex(rng, 4)]
        for j in range(2):
            assert superscript_difference_residual(exp_symbol(), hs, xs, j, random_hermitian(rng, 4)) <= 1e-9


def test_budget_guards(rng):
    h = random_hermitian(rng, 3)
    with pytest.raises(BudgetExceeded):
        moi_eval([h] * 6, [h] * 5, exp_symbol())
    with pytest.raises(BudgetExceeded):
        moi_eval([h] * 3, [h] * 2, exp_symbol(), MoiBudget(max_cluster_terms=10))
    with pytest.raises(OrderUnavailable):
        moi_eval([h] * 3, [h] * 2, exp_symbol(max_order=1))
    with pytest.raises(ConfigError):
        moi_eval([h, h], [h, h], exp_symbol())


def test_expansion_coefficients():
    assert expansion_coefficient([0]) == 1
    assert expansion_coefficient([1, 1]) == 3
    assert expansion_coefficient([2, 3]) == math.comb(2, 2) * math.comb(6, 3)
    assert multiset_coefficient(2, 3) == 4


def _brute_multisets(n, k):
    return sum(1 for _ in combinations_with_replacement(range(n), k))


@given(st.integers(1, 6), st.integers(0, 6))
def test_multiset_coefficient_matches_enumeration(n, k):
    assert multiset_coefficient(n, k) == _brute_multisets(n, k)


@given(st.integers(0, 6), st.integers(0, 6))
def test_multiset_partial_sum_identity(m, j):
    assert sum(multiset_coefficient(m, l) for l in range(j + 1)) == multiset_coefficient(m + 1, j)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=4))
def test_expansion_coefficient_is_product_of_multisets(ms):
    acc, prod = 0, 1
    for j, m in enumerate(ms, start=1):
        prod *= multiset_coefficient(j + acc, m)
        acc += m
    assert expansion_coefficient(ms) == prod


def test_compositions_enumerate_weak_compositions():
    comps = list(compositions(3, 2))
    assert sorted(comps) == [(0, 3), (1, 2), (2, 1), (3, 0)]
    assert len(list(compositions(4, 3))) == math.comb(6, 2)
    assert Counter(sum(c) for c in compositions(5, 3)) == {5: 21}


def test_delta_expansion_trivial_cases(rng):
    h = random_hermitian(rng, 4)
    v = random_hermitian(rng, 4)
    np.testing.assert_allclose(delta_expansion(exp_symbol(), h, v, 0, 0), apply_function(h, exp_symbol()), atol=1e-13)
    hd, vd = np.diag([0.1, 0.4, -0.3]), np.diag([0.05, -0.02, 0.01])
    classical = sum(apply_function(hd, exp_symbol(), order=n) @ np.linalg.matrix_power(vd, n) / math.factorial(n)
                    for n in range(4))
    np.testing.assert_allclose(delta_expansion(exp_symbol(), hd, vd, 3, 3), classical, atol=1e-13)


def test_delta_expansion_accuracy_small_spread(rng):
    h = 0.025 * random_hermitian(rng, 4)
    v = random_hermitian(rng, 4)
    errs = []
    for t in (1e-1, 3e-2, 1e-2):
        direct = exp_symbol().on_matrix(h + t * v)
        errs.append(op_norm(direct - delta_expansion(exp_symbol(), h, t * v, 2, 3)))
    assert errs[-1] < errs[0]
    assert errs[-1] <= 1e-5


def test_heat_trace_collapses_without_perturbation(rng):
    d = random_hermitian(rng, 4)
    rep = heat_trace_expansion(heat_symbol(1.0), d, np.zeros((4, 4)), N=2)
    np.testing.assert_allclose(rep.residuals, 0, atol=1e-13)


def test_heat_trace_commuting_diagonal():
    d, v = np.diag([0.5, 1.0, 2.0]), np.diag([0.2, -0.1, 0.3])
    rep = heat_trace_expansion(heat_symbol(1.0), d, v, N=3, M=0, ts=(0.1,))
    t = 0.1
    scalar = sum(sum((-t * vi) ** n / math.factorial(n) for n in range(4)) * math.exp(-t * di)
                 for di, vi in zip(np.diag(d), np.diag(v)))
    assert rep.terms.sum() == pytest.approx(scalar, rel=1e-13)


def test_heat_trace_residual_slope(rng):
    d, v = random_hermitian(rng, 4), random_hermitian(rng, 4)
    rep = heat_trace_expansion(heat_symbol(1.0), d, v, N=2, ts=np.geomspace(1e-3, 1e-1, 5))
    assert rep.slope >= 2 + 1 - 0.2
