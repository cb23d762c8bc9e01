"""Finite-dimensional multiple operator integrals and noncommutative Taylor
expansions.

For Hermitian ``H_0..H_n`` with spectral projections ``P^{(j)}_i`` the operator

    T_phi^{H_0..H_n}(V_1..V_n) = sum phi(l_{i0},..,l_{in}) P_{i0} V_1 P_{i1} ... V_n P_{in}

is evaluated in the eigenbases: ``V_j`` is rotated to ``U_{j-1}^* V_j U_j``,
the symbol is sampled once per tuple of eigenvalue clusters, broadcast to
eigen-indices, and contracted with ``einsum``.
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .divdiff import SymbolFunction, divided_differences
from .errors import BudgetExceeded, ConfigError, OrderUnavailable
from .operators import SpectralData, apply_function, as_matrix, op_norm, spectral_decompose


@dataclass(frozen=True)
class MoiBudget:
    max_order: int = 4
    max_cluster_terms: int = 10**7
    max_dense_terms: int = 5 * 10**7


DEFAULT_BUDGET = MoiBudget()


def _symbol_tensor(symbol, spectra: Sequence[SpectralData], n: int) -> np.ndarray:
    values = [s.cluster_values for s in spectra]
    if isinstance(symbol, SymbolFunction):
        if n > symbol.max_order:
            raise OrderUnavailable(f"{symbol.name}^[{n}] needs max_order >= {n}")
        grids = np.meshgrid(*values, indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        phi = divided_differences(symbol, nodes).reshape(grids[0].shape)
    else:
        grids = np.meshgrid(*values, indexing="ij")
        phi = np.broadcast_to(np.asarray(symbol(*grids)), grids[0].shape)
    labels = [s.cluster_index for s in spectra]
    return phi[np.ix_(*labels)]


def moi_eval(spectra, args, symbol: SymbolFunction | Callable, budget: MoiBudget = DEFAULT_BUDGET) -> np.ndarray:
    """Evaluate ``T_phi^{H_0..H_n}(V_1..V_n)``.

    Parameters
    ----------
    spectra : sequence of n+1 Hermitian matrices or :class:`SpectralData`
    args : sequence of n square matrices
    symbol : SymbolFunction ``f`` (meaning ``phi = f^[n]``) or a vectorized
        callable ``phi(l0, ..., ln)``.
    """
    spectra = [spectral_decompose(s) for s in spectra]
    args = [np.asarray(as_matrix(v)) for v in args]
    n = len(args)
    if len(spectra) != n + 1:
        raise ConfigError(f"need {n + 1} spectral data for {n} arguments, got {len(spectra)}")
    d = spectra[0].dim
    if any(s.dim != d for s in spectra) or any(v.shape != (d, d) for v in args):
        raise ConfigError("all operators must share one dimension")
    if n > budget.max_order:
        raise BudgetExceeded(f"order {n} above cap {budget.max_order}")
    m_terms = math.prod(len(s.groups) for s in spectra)
    if m_terms > budget.max_cluster_terms or d ** (n + 1) > budget.max_dense_terms:
        raise BudgetExceeded(f"{m_terms} cluster terms / {d ** (n + 1)} dense terms exceed budget")

    phi = _symbol_tensor(symbol, spectra, n)
    us = [s.eigenvectors for s in spectra]
    if n == 0:
        return (us[0] * phi) @ us[0].conj().T
    rotated = [us[j].conj().T @ args[j] @ us[j + 1] for j in range(n)]
    idx = string.ascii_letters[: n + 1]
    expr = idx + "," + ",".join(idx[j] + idx[j + 1] for j in range(n)) + "->" + idx[0] + idx[n]
    core = np.einsum(expr, phi, *rotated, optimize=True)
    return us[0] @ core @ us[n].conj().T


# -- identities ---------------------------------------------------------------

def _lip_scale(f: SymbolFunction, *mats) -> tuple[float, float]:
    spec = np.concatenate([spectral_decompose(m).eigenvalues for m in mats])
    lip = f.lipschitz(float(spec.min()), float(spec.max()))
    norms = sum(op_norm(m) for m in mats)
    return 1e-9 * (1.0 + norms) * max(lip, 1.0), lip


@dataclass(frozen=True)
class IdentityResiduals:
    commutator_residual: float
    perturbation_residual: float
    scale: float
    lipschitz: float

    @property
    def passed(self) -> bool:
        return max(self.commutator_residual, self.perturbation_residual) <= self.scale


def identity_residuals(f: SymbolFunction, a, b) -> IdentityResiduals:
    """Residuals of ``[f(A),B] = T^{A,A}_{f^[1]}([A,B])`` and
    ``f(A)-f(B) = T^{A,B}_{f^[1]}(A-B)``; left sides use ``f.on_matrix``."""
    if f.max_order < 2:
        raise OrderUnavailable("identity checks need max_order >= 2")
    a = np.asarray(as_matrix(a))
    b = np.asarray(as_matrix(b))
    sa, sb = spectral_decompose(a), spectral_decompose(b)
    fa, fb = f.on_matrix(a), f.on_matrix(b)
    comm = moi_eval([sa, sa], [a @ b - b @ a], f)
    pert = moi_eval([sa, sb], [a - b], f)
    scale, lip = _lip_scale(f, a, b)
    return IdentityResiduals(
        op_norm(fa @ b - b @ fa - comm), op_norm(fa - fb - pert), scale, lip)


def shuffle_residuals(f: SymbolFunction, hs, xs, a, j: int = 0) -> dict:
    """Residuals of the three commutator-shuffle identities for
    ``T_{f^[n]}^{H_0..H_n}(X_1..X_n)`` and a bounded ``a``.

    ``inner``: moving ``a`` across slot ``j`` (``0 <= j < n-1``);
    ``left``: pulling ``a`` out on the left; ``right``: on the right.
    """
    hs = [np.asarray(as_matrix(h)) for h in hs]
    xs = [np.asarray(as_matrix(x)) for x in xs]
    n = len(xs)
    sp = [spectral_decompose(h) for h in hs]

    def com(h, y):
        return h @ y - y @ h

    out = {}
    if n >= 2:
        lhs = (moi_eval(sp, xs[: j + 1] + [a @ xs[j + 1]] + xs[j + 2:], f)
               - moi_eval(sp, xs[:j] + [xs[j] @ a] + xs[j + 1:], f))
        rhs = moi_eval(sp[: j + 2] + sp[j + 1:], xs[: j + 1] + [com(hs[j + 1], a)] + xs[j + 1:], f)
        out["inner"] = op_norm(lhs - rhs)
    lhs = moi_eval(sp, [a @ xs[0]] + xs[1:], f) - a @ moi_eval(sp, xs, f)
    rhs = moi_eval([sp[0]] + sp, [com(hs[0], a)] + xs, f)
    out["left"] = op_norm(lhs - rhs)
    lhs = moi_eval(sp, xs, f) @ a - moi_eval(sp, xs[:-1] + [xs[-1] @ a], f)
    rhs = moi_eval(sp + [sp[-1]], xs + [com(hs[-1], a)], f)
    out["right"] = op_norm(lhs - rhs)
    return out


def superscript_difference_residual(f: SymbolFunction, hs, xs, j: int, b) -> float:
    """Residual of ``T^{..,A,..} - T^{..,B,..} = T^{..,A,B,..}_{f^[n+1]}(X_1..X_j, A-B, X_{j+1}..)``
    where ``A = hs[j]`` is replaced by ``B``."""
    hs = [np.asarray(as_matrix(h)) for h in hs]
    xs = [np.asarray(as_matrix(x)) for x in xs]
    b = np.asarray(as_matrix(b))
    sp = [spectral_decompose(h) for h in hs]
    sb = spectral_decompose(b)
    swapped = sp[:j] + [sb] + sp[j + 1:]
    lhs = moi_eval(sp, xs, f) - moi_eval(swapped, xs, f)
    rhs = moi_eval(sp[: j + 1] + [sb] + sp[j + 1:], xs[:j] + [hs[j] - b] + xs[j:], f)
    return op_norm(lhs - rhs)


# -- derivatives and Taylor expansions ---------------------------------------

def gateaux_derivative(f: SymbolFunction, a, b, n: int) -> np.ndarray:
    """``(1/n!) d^n/dt^n f(A+tB)`` at ``t=0``."""
    s = spectral_decompose(a)
    return moi_eval([s] * (n + 1), [as_matrix(b)] * n, f)


def taylor_partial_sum(f: SymbolFunction, h, v, N: int) -> np.ndarray:
    if N + 1 > f.max_order:
        raise OrderUnavailable(f"Taylor order {N} needs max_order >= {N + 1}")
    s = spectral_decompose(h)
    v = np.asarray(as_matrix(v))
    return sum(moi_eval([s] * (n + 1), [v] * n, f) for n in range(N + 1))


def taylor_remainder_term(f: SymbolFunction, h, v, N: int) -> np.ndarray:
    """Closed-form remainder ``T^{H+V,H,..,H}_{f^[N+1]}(V,..,V)``."""
    h = np.asarray(as_matrix(h))
    v = np.asarray(as_matrix(v))
    s = spectral_decompose(h)
    return moi_eval([spectral_decompose(h + v)] + [s] * (N + 1), [v] * (N + 1), f)


@dataclass(frozen=True)
class DecayReport:
    ts: np.ndarray
    errors: np.ndarray
    slope: float


def loglog_slope(ts, errors) -> float:
    ts, errors = np.asarray(ts, float), np.asarray(errors, float)
    ok = errors > 0
    if ok.sum() < 2:
        return float("inf")
    return float(np.polyfit(np.log(ts[ok]), np.log(errors[ok]), 1)[0])


def taylor_remainder(f: SymbolFunction, h, v, N: int, ts=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3)) -> DecayReport:
    h = np.asarray(as_matrix(h))
    v = np.asarray(as_matrix(v))
    errs = []
    for t in ts:
        direct = f.on_matrix(h + t * v)
        errs.append(op_norm(direct - taylor_partial_sum(f, h, t * v, N)))
    errs = np.array(errs)
    return DecayReport(np.asarray(ts, float), errs, loglog_slope(ts, errs))


def expansion_coefficient(ms: Sequence[int]) -> int:
    """``prod_j binom(j + m_1 + .. + m_j - 1, m_j)`` (exact integer)."""
    out, acc = 1, 0
    for j, m in enumerate(ms, start=1):
        if m < 0:
            raise ConfigError("multi-index entries must be non-negative")
        acc += m
        out *= math.comb(j + acc - 1, m)
    return out


def multiset_coefficient(n: int, k: int) -> int:
    """Number of size-``k`` multisets drawn from ``n`` kinds."""
    if n < 0 or k < 0:
        raise ConfigError("multiset coefficient needs non-negative arguments")
    if n == 0:
        return 1 if k == 0 else 0
    return math.comb(n + k - 1, k)


def compositions(total: int, parts: int):
    """Weak compositions of ``total`` into ``parts`` non-negative integers."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, out = -1, []
        for c in cut + (total + parts - 1,):
            out.append(c - prev - 1)
            prev = c
        yield tuple(out)


def _commutator_powers(h: np.ndarray, v: np.ndarray, M: int) -> list[np.ndarray]:
    out = [v]
    for _ in range(M):
        y = out[-1]
        out.append(h @ y - y @ h)
    return out


def _delta_terms(f: SymbolFunction, h, v, N: int, M: int, left=None) -> np.ndarray:
    """Table ``terms[n, m]`` of matrices (or traces against ``left`` when given)."""
    if N + M > f.max_order:
        raise OrderUnavailable(f"expansion box needs max_order >= {N + M}")
    s = spectral_decompose(h)
    deltas = _commutator_powers(np.asarray(as_matrix(h)), np.asarray(as_matrix(v)), M)
    derivs = {}
    d = s.dim
    table = np.zeros((N + 1, M + 1, d, d), dtype=complex)
    for n in range(N + 1):
        for m in range(M + 1):
            if n == 0 and m > 0:
                continue
            k = n + m
            if k not in derivs:
                derivs[k] = apply_function(s, f, order=k)
            acc = np.zeros((d, d), dtype=complex)
            for ms in compositions(m, n):
                prod = np.eye(d, dtype=complex)
                for mj in ms:
                    prod = prod @ deltas[mj]
                acc += expansion_coefficient(ms) * prod
            table[n, m] = acc @ derivs[k] / math.factorial(k)
    return table


def delta_expansion(f: SymbolFunction, h, v, N: int, M: int) -> np.ndarray:
    """``sum_{n<=N, m<=M} sum_{|ms|=m} C_ms/(n+m)! d^{m_1}(V)..d^{m_n}(V) f^(n+m)(H)``
    with ``d(V) = [H, V]``."""
    return _delta_terms(f, h, v, N, M).sum(axis=(0, 1))


@dataclass(frozen=True)
class HeatTraceReport:
    ts: np.ndarray
    terms: np.ndarray          # (len(ts), N+1, M+1) traces, powers of t included
    direct: np.ndarray
    residuals: np.ndarray
    slope: float


def heat_trace_expansion(f: SymbolFunction, d_op, v, p=None, N: int = 2, M: int | None = None,
                         ts=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3)) -> HeatTraceReport:
    """Compare ``Tr(P f(tD + tV))`` with the truncated commutator expansion in ``t``."""
    M = N if M is None else M
    dmat = np.asarray(as_matrix(d_op))
    vmat = np.asarray(as_matrix(v))
    pmat = np.eye(dmat.shape[0]) if p is None else np.asarray(as_matrix(p))
    terms, direct = [], []
    for t in ts:
        # d_{tD}^m(tV) = t^{m+1} d_D^m(V); the expansion at H = tD, V -> tV
        table = _delta_terms(f, t * dmat, t * vmat, N, M)
        terms.append(np.einsum("ij,nmji->nm", pmat, table))
        direct.append(np.trace(pmat @ apply_function(t * (dmat + vmat), f)))
    terms = np.array(terms)
    direct = np.array(direct)
    res = np.abs(direct - terms.sum(axis=(1, 2)))
    return HeatTraceReport(np.asarray(ts, float), terms, direct, res, loglog_slope(ts, res))
