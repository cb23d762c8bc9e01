"""Spectral truncation experiments on model triples: the circle, Toeplitz
operators on the Hardy space, and noncommutative tori; plus lattice-point
counting on flat tori.

Every triple lives on a finite window of basis vectors.  ``P_lambda`` is the
projection onto ``{|D| <= lambda}``; grids are snapped to the distinct values
of ``|D|`` so it is never split inside an eigenvalue multiplicity.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import BadTheta, BudgetExceeded, ConfigError, WindowTooSmall
from .summation import SeriesDiagnostics, diagnose
from .moi import loglog_slope


@dataclass(frozen=True)
class ModelTriple:
    """Truncated model.  ``labels`` are Fourier indices (ints, or rows of an
    integer array for the torus) in natural order; ``abs_d`` holds ``|D|`` on
    them; ``order`` sorts the basis by ``|D|`` with index tie-break."""

    kind: str
    K: int
    labels: np.ndarray = field(repr=False)
    dirac: np.ndarray = field(repr=False)
    theta: np.ndarray | None = field(default=None, repr=False)
    d: int = 1

    @property
    def dim(self) -> int:
        return self.labels.shape[0]

    @property
    def abs_d(self) -> np.ndarray:
        return np.abs(self.dirac)

    @property
    def order(self) -> np.ndarray:
        return np.lexsort((np.arange(self.dim), np.round(self.abs_d, 12)))

    @property
    def d_spec(self) -> int:
        return self.d if self.kind == "nctorus" else 1

    @property
    def reach(self) -> float:
        """Largest ``lambda`` for which ``P_lambda`` is not clipped by the window."""
        return float(self.K)

    def boundaries(self) -> np.ndarray:
        """Distinct values of ``|D|`` up to the reach."""
        v = np.unique(np.round(self.abs_d, 12))
        return v[v <= self.reach + 1e-12]

    def weight(self) -> np.ndarray:
        """``<D>^{-d_spec}`` with ``<D> = (1 + D^2)^{1/2}``."""
        return (1.0 + self.dirac**2) ** (-self.d_spec / 2.0)

    def _index(self) -> dict:
        return {tuple(np.atleast_1d(l).tolist()): i for i, l in enumerate(self.labels)}


def build_triple(kind: str, K: int, d: int = 2, theta=None) -> ModelTriple:
    """``circle``: ``D e_k = k e_k`` on ``k = -K..K``; ``toeplitz``: ``j = 0..K``;
    ``nctorus``: ``|D| u_k = |k|_2 u_k`` on ``|k|_inf <= K`` with deformation ``theta``."""
    if K < 1:
        raise ConfigError("K must be at least 1")
    if kind == "circle":
        lab = np.arange(-K, K + 1)
        return ModelTriple(kind, K, lab, lab.astype(float))
    if kind == "toeplitz":
        lab = np.arange(0, K + 1)
        return ModelTriple(kind, K, lab, lab.astype(float))
    if kind == "nctorus":
        th = np.zeros((d, d)) if theta is None else np.asarray(theta, dtype=float)
        if th.ndim == 0 and d == 2:
            th = np.array([[0.0, float(th)], [-float(th), 0.0]])
        if th.shape != (d, d) or not np.allclose(th, -th.T, atol=1e-14):
            raise BadTheta("theta must be a real antisymmetric d x d matrix")
        if (2 * K + 1) ** d > 200_000:
            raise BudgetExceeded("torus window too large")
        axes = [np.arange(-K, K + 1)] * d
        lab = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        return ModelTriple(kind, K, lab, np.sqrt((lab**2).sum(axis=1).astype(float)), th, d)
    raise ConfigError(f"unknown triple kind {kind!r}")


# -- observables ------------------------------------------------------------------

def fourier_operator(triple: ModelTriple, coeffs: dict) -> sp.csr_matrix:
    """Multiplication (circle) or Toeplitz (Hardy space) operator with
    ``<e_j, a e_l> = c_{j-l}``, truncated to the window."""
    if triple.kind not in ("circle", "toeplitz"):
        raise ConfigError("fourier_operator needs a circle or toeplitz triple")
    n = triple.dim
    rows, cols, vals = [], [], []
    for m, c in coeffs.items():
        l = np.arange(max(0, -m), min(n, n - m))
        rows.append(l + m)
        cols.append(l)
        vals.append(np.full(l.size, c, dtype=complex))
    a = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    a = a.tocsr()
    return a.real.tocsr() if not np.any(a.imag.data) else a


def torus_phase(theta: np.ndarray, n, m) -> complex:
    return complex(np.exp(0.5j * float(np.asarray(n) @ theta @ np.asarray(m))))


def torus_element(triple: ModelTriple, coeffs: dict) -> sp.csr_matrix:
    """Left multiplication by ``a = sum c_k u_k`` on the window:
    ``u_k u_n = exp((i/2) <k, theta n>) u_{k+n}``, products leaving the window dropped."""
    if triple.kind != "nctorus":
        raise ConfigError("torus_element needs an nctorus triple")
    idx = triple._index()
    lab = triple.labels
    rows, cols, vals = [], [], []
    for k, c in coeffs.items():
        k = np.asarray(k)
        tgt = lab + k
        inside = np.all(np.abs(tgt) <= triple.K, axis=1)
        src = np.flatnonzero(inside)
        dst = np.array([idx[tuple(t)] for t in tgt[inside].tolist()], dtype=int)
        phase = np.exp(0.5j * (lab[inside] @ (triple.theta.T @ k)))
        rows.append(dst)
        cols.append(src)
        vals.append(c * phase)
    n = triple.dim
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def tau(coeffs: dict, d: int) -> complex:
    """Trace on the torus: the coefficient of ``u_0``."""
    return complex(coeffs.get(tuple([0] * d), 0.0))


def _dense(a) -> np.ndarray:
    return a.toarray() if sp.issparse(a) else np.asarray(a)


# -- truncation functional -------------------------------------------------------------

def snap_grid(triple: ModelTriple, lambdas) -> np.ndarray:
    """Largest multiplicity boundary ``<= lambda`` for each grid value."""
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas > triple.reach + 1e-12):
        raise WindowTooSmall(f"lambda above the window reach {triple.reach}")
    b = triple.boundaries()
    pos = np.searchsorted(b, lambdas + 1e-12, side="right") - 1
    if np.any(pos < 0):
        raise WindowTooSmall("lambda below the smallest |D|")
    return np.unique(b[pos])


def projection_size(triple: ModelTriple, lam: float) -> int:
    return int(np.count_nonzero(triple.abs_d <= lam + 1e-12))


@dataclass(frozen=True)
class TruncationReport:
    lambdas: np.ndarray
    trace_p: np.ndarray
    values: np.ndarray
    reference: float | None = None
    provenance: str = ""
    bias: float | None = None

    def __post_init__(self):
        assert np.all(np.diff(self.trace_p) > 0)


def truncation_functional(triple: ModelTriple, a, lambdas=None, reference=None,
                          provenance: str = "") -> TruncationReport:
    """``Tr(P_lambda a P_lambda) / Tr(P_lambda)`` on a snapped grid."""
    lam = triple.boundaries() if lambdas is None else snap_grid(triple, lambdas)
    diag = np.asarray(_dense(a).diagonal() if not sp.issparse(a) else a.diagonal())[triple.order]
    cum = np.cumsum(diag)
    sizes = np.array([projection_size(triple, l) for l in lam])
    vals = np.real_if_close(cum[sizes - 1] / sizes)
    return TruncationReport(lam, sizes, vals, reference, provenance)


@dataclass(frozen=True)
class MeansReport:
    diagnostics: SeriesDiagnostics
    boundary_gap: float        # |Cesaro at Tr(P)-1 - truncation functional| at boundaries
    truncation: TruncationReport


def matrix_element_means(triple: ModelTriple, a, window: int = 4, tol: float = 0.02) -> MeansReport:
    """Diagonal elements ``<e_k, a e_k>`` in ``|D|`` order with Cesaro and
    logarithmic means, and the basis-count functional compared with the
    spectral-projection functional at multiplicity boundaries."""
    diag = np.real_if_close(np.asarray(a.diagonal() if sp.issparse(a) else np.diag(a))[triple.order])
    dg = diagnose(diag, ("cesaro", "logmean"), window=window, tol=tol)
    rep = truncation_functional(triple, a)
    gap = float(np.max(np.abs(dg.transforms["cesaro"][rep.trace_p - 1] - rep.values)))
    return MeansReport(dg, gap, rep)


# -- Widom, Szego, Frohlich ------------------------------------------------------

def _resolve(op, triple):
    return op(triple) if callable(op) else op


def _split(triple: ModelTriple, lam: float):
    n = projection_size(triple, lam)
    o = triple.order
    return o[:n], o[n:]


@dataclass(frozen=True)
class SeriesReport:
    lambdas: np.ndarray
    trace_p: np.ndarray
    values: np.ndarray
    reference: float | None = None
    bias: float | None = None
    decay_exponent: float | None = None


def _half_window_bias(fn, triple, ops, lambdas, values) -> float | None:
    if not all(callable(op) for op in ops) or triple.K < 4:
        return None
    half = build_triple(triple.kind, triple.K // 2, triple.d, triple.theta)
    keep = lambdas <= half.reach
    if not np.any(keep):
        return None
    other = fn(half, *ops, lambdas[keep]).values
    return float(np.max(np.abs(np.asarray(values)[keep] - other)))


def _widom_values(triple, A, B, lambdas):
    a, b = _resolve(A, triple), _resolve(B, triple)
    a = sp.csr_matrix(a)
    b = sp.csr_matrix(b)
    out, sizes = [], []
    for lam in lambdas:
        inside, outside = _split(triple, lam)
        left = a[inside][:, outside]
        right = b[outside][:, inside]
        out.append(left.multiply(right.T).sum() / inside.size)
        sizes.append(inside.size)
    return SeriesReport(np.asarray(lambdas), np.array(sizes), np.real_if_close(np.array(out)))


def widom_ratio(triple: ModelTriple, A, B, lambdas=None) -> SeriesReport:
    """``Tr(P A (1-P) B P) / Tr(P)`` with ``1-P`` taken inside the window.

    ``A`` and ``B`` may be matrices or builders ``triple -> matrix``; with
    builders a window-bias estimate is obtained by recomputing at ``K/2``.
    """
    lam = triple.boundaries() if lambdas is None else snap_grid(triple, lambdas)
    rep = _widom_values(triple, A, B, lam)
    bias = _half_window_bias(lambda t, a, b, l: _widom_values(t, a, b, l), triple, (A, B), lam, rep.values)
    vals = np.abs(rep.values)
    pos = (vals > 0) & (rep.lambdas > 0)
    slope = -loglog_slope(rep.trace_p[pos], vals[pos]) if pos.sum() >= 2 else None
    return SeriesReport(rep.lambdas, rep.trace_p, rep.values, None, bias, slope)


def _szego_values(triple, A, f, lambdas):
    a = _dense(_resolve(A, triple))
    out, sizes = [], []
    for lam in lambdas:
        inside, _ = _split(triple, lam)
        block = a[np.ix_(inside, inside)]
        ev = scipy.linalg.eigvalsh(block)
        out.append(np.sum(f(ev)) / inside.size)
        sizes.append(inside.size)
    return SeriesReport(np.asarray(lambdas), np.array(sizes), np.array(out))


def szego_functional(triple: ModelTriple, A, f: Callable, lambdas=None, reference=None) -> SeriesReport:
    """``Tr(f(P A P)) / Tr(P)`` for Hermitian ``A`` and continuous ``f`` with ``f(0) = 0``."""
    if abs(float(np.real(f(np.zeros(1))[0]))) > 1e-14:
        raise ConfigError("Szego functional needs f(0) = 0")
    lam = triple.boundaries() if lambdas is None else snap_grid(triple, lambdas)
    rep = _szego_values(triple, A, f, lam)
    bias = _half_window_bias(lambda t, a, l: _szego_values(t, a, f, l), triple, (A,), lam, rep.values)
    return SeriesReport(rep.lambdas, rep.trace_p, rep.values, reference, bias)


def widom_defect(triple: ModelTriple, A, k: int, lambdas=None) -> SeriesReport:
    """``Tr(P A^k P - (P A P)^k) / Tr(P)``; ``A^k`` is formed on the window."""
    a = _dense(_resolve(A, triple))
    ak = np.linalg.matrix_power(a, k)
    lam = triple.boundaries() if lambdas is None else snap_grid(triple, lambdas)
    out, sizes = [], []
    for l in lam:
        inside, _ = _split(triple, l)
        block = a[np.ix_(inside, inside)]
        out.append((np.trace(ak[np.ix_(inside, inside)]) - np.trace(np.linalg.matrix_power(block, k))) / inside.size)
        sizes.append(inside.size)
    vals = np.real_if_close(np.array(out))
    sizes = np.array(sizes)
    nz = np.abs(vals) > 1e-14
    slope = -loglog_slope(sizes[nz], np.abs(vals[nz])) if nz.sum() >= 2 else None
    return SeriesReport(lam, sizes, vals, 0.0, None, slope)


def frohlich_ratio(triple: ModelTriple, a, ts) -> SeriesReport:
    """``Tr(a exp(-t|D|)) / Tr(exp(-t|D|))``; ``bias`` is the largest relative
    Gibbs weight at the window edge, ``exp(-t K)``."""
    diag = np.asarray(a.diagonal() if sp.issparse(a) else np.diag(_dense(a)))
    ts = np.asarray(ts, dtype=float)
    if np.any(ts <= 0):
        raise ConfigError("t must be positive")
    vals = []
    for t in ts:
        g = np.exp(-t * (triple.abs_d - triple.abs_d.min()))
        vals.append(np.sum(diag * g) / np.sum(g))
    return SeriesReport(ts, np.full(ts.size, triple.dim), np.real_if_close(np.array(vals)),
                        None, float(np.exp(-ts.min() * triple.reach)))


# -- Weyl counting ------------------------------------------------------------------

@dataclass(frozen=True)
class WeylTable:
    d: int
    levels: np.ndarray          # distinct values of |k|^2
    counts: np.ndarray          # N(level)
    constant: float             # fitted C in N ~ C lambda^{d/2}, exponent fixed
    exponent: float             # free power-law fit
    unit_ball_volume: float

    def count(self, lam) -> np.ndarray:
        pos = np.searchsorted(self.levels, np.asarray(lam, dtype=float), side="right") - 1
        return np.where(pos >= 0, self.counts[np.clip(pos, 0, None)], 0)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def weyl_counting(d: int, lam_max: float, max_points: int = 30_000_000) -> WeylTable:
    """``N(lambda) = #{k in Z^d : |k|^2 <= lambda}`` for all ``lambda <= lam_max``."""
    r = math.isqrt(int(math.floor(lam_max)))
    if (2 * r + 1) ** d > max_points:
        raise BudgetExceeded(f"lattice box with {(2 * r + 1) ** d} points above cap")
    sq = np.arange(-r, r + 1, dtype=np.int64) ** 2
    tot = sq
    for _ in range(d - 1):
        tot = np.add.outer(tot, sq).ravel()
        tot = tot[tot <= lam_max]
    tot = tot[tot <= lam_max]
    levels, cnt = np.unique(tot, return_counts=True)
    counts = np.cumsum(cnt)
    upper = levels >= max(1.0, lam_max / 4)
    x, y = levels[upper].astype(float), counts[upper].astype(float)
    if x.size >= 2:
        exponent = float(np.polyfit(np.log(x), np.log(y), 1)[0])
        constant = float(np.mean(y / x ** (d / 2)))
    else:
        exponent, constant = float("nan"), float("nan")
    return WeylTable(d, levels.astype(float), counts, constant, exponent, unit_ball_volume(d))


def report_csv(rep, extra: dict | None = None) -> str:
    """Columns ``lambda, trace_p, value, reference, bias`` plus ``extra``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra = extra or {}
    w.writerow(["lambda", "trace_p", "value", "reference", "bias"] + list(extra))
    ref = "" if rep.reference is None else repr(float(rep.reference))
    bias = "" if getattr(rep, "bias", None) is None else repr(float(rep.bias))
    for l, n, v in zip(rep.lambdas, rep.trace_p, rep.values):
        w.writerow([repr(float(l)), int(n), repr(float(np.real(v))), ref, bias] + list(extra.values()))
    return buf.getvalue()
