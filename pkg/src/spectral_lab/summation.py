"""Sequence transforms, Dixmier partial sums, Abel and level-set functionals,
and checkpointed convergence verdicts.

Extended limits cannot be computed; a :class:`Verdict` records the smallest
and largest value of a transform over a tail window of dyadic checkpoints, and
only calls a sequence converged when that spread is below ``tol``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import EmptyInput, NotPositive, TooShort
from .operators import EigenSequence

MEASURABILITY_CAVEAT = ("finite-prefix evidence only: agreement of liminf and limsup on a "
                        "window is necessary, not sufficient, for independence of the extended limit")


def _seq(x) -> np.ndarray:
    if isinstance(x, EigenSequence):
        x = x.values
    x = np.asarray(x)
    if x.ndim != 1 or x.size == 0:
        raise EmptyInput("expected a non-empty 1-D sequence")
    return x


def cesaro(x) -> np.ndarray:
    """``C(x)_n = (1/(n+1)) sum_{k<=n} x_k``."""
    x = _seq(x)
    return np.cumsum(x) / np.arange(1, x.size + 1)


def log_mean(x) -> np.ndarray:
    """``M(x)_n = (1/log(n+2)) sum_{k<=n} x_k/(k+1)``."""
    x = _seq(x)
    k = np.arange(x.size)
    return np.cumsum(x / (k + 1)) / np.log(k + 2)


def dixmier_partial(seq) -> np.ndarray:
    """``(1/log(n+2)) sum_{k<=n} lambda_k``; pass values already ordered by
    decreasing modulus."""
    x = _seq(seq)
    return np.cumsum(x) / np.log(np.arange(x.size) + 2)


TRANSFORMS = {"cesaro": cesaro, "logmean": log_mean, "dixmier": dixmier_partial}


def checkpoints(n_max: int) -> np.ndarray:
    """Dyadic indices ``2^j <= n_max``."""
    if n_max < 1:
        return np.array([], dtype=int)
    return 2 ** np.arange(int(math.floor(math.log2(n_max))) + 1)


@dataclass(frozen=True)
class Verdict:
    kind: str                # converged | oscillating | undecided
    liminf: float
    limsup: float
    value: float | None
    window: int
    tol: float
    n_max: int
    caveat: str = MEASURABILITY_CAVEAT

    def __post_init__(self):
        assert self.liminf <= self.limsup

    @property
    def spread(self) -> float:
        return self.limsup - self.liminf

    def label(self) -> str:
        if self.kind == "converged":
            return f"converged({self.value:.6g}) [window {self.window}, n_max {self.n_max}]"
        if self.kind == "oscillating":
            return f"oscillating({self.liminf:.6g}, {self.limsup:.6g}) [window {self.window}, n_max {self.n_max}]"
        return f"undecided({self.liminf:.6g}..{self.limsup:.6g}) [window {self.window}, n_max {self.n_max}]"


def convergence_verdict(seq, window: int = 4, tol: float = 1e-2) -> Verdict:
    """Classify the tail starting at the ``window``-th last dyadic checkpoint.

    ``converged`` if the tail spread is within ``tol``; otherwise
    ``oscillating`` when the tail is not monotone, ``undecided`` when it is
    monotone but has not settled.
    """
    x = np.real_if_close(_seq(seq)).astype(float)
    if window < 2:
        raise TooShort("window must cover at least 2 checkpoints")
    n_max = x.size - 1
    cps = checkpoints(n_max)
    if len(cps) < window:
        raise TooShort(f"{len(cps)} dyadic checkpoints available, window needs {window}")
    tail = x[cps[-window]:]
    lo, hi = float(tail.min()), float(tail.max())
    if hi - lo <= tol:
        return Verdict("converged", lo, hi, float(x[-1]), window, tol, n_max)
    steps = np.diff(tail)
    monotone = bool(np.all(steps >= 0) or np.all(steps <= 0))
    return Verdict("undecided" if monotone else "oscillating", lo, hi, None, window, tol, n_max)


@dataclass
class SeriesDiagnostics:
    raw: np.ndarray = field(repr=False)
    transforms: dict = field(repr=False)
    checkpoints: np.ndarray
    verdicts: dict

    @property
    def n_max(self) -> int:
        return self.raw.size - 1

    def at_checkpoints(self, name: str) -> np.ndarray:
        return self.transforms[name][self.checkpoints]


def diagnose(raw, transforms=("cesaro", "logmean", "dixmier"), window: int = 4, tol: float = 1e-2) -> SeriesDiagnostics:
    raw = _seq(raw)
    out = {name: TRANSFORMS[name](raw) for name in transforms}
    verdicts = {name: convergence_verdict(v, window, tol) for name, v in out.items()}
    return SeriesDiagnostics(raw, out, checkpoints(raw.size - 1), verdicts)


# -- weighted means and subsequences -----------------------------------------

def weighted_mean(x, weights) -> np.ndarray:
    """Prefix means ``sum_{k<=n} c_k x_k / sum_{k<=n} c_k`` with ``c_k >= 0``."""
    x, c = _seq(x), _seq(weights)
    if np.any(c < 0):
        raise NotPositive("weights must be non-negative")
    den = np.cumsum(c)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, np.cumsum(c * x) / np.where(den > 0, den, 1), np.nan)


def subsequence_values(seq, sub_indices, at) -> np.ndarray:
    """Value of ``seq`` at the largest element of ``sub_indices`` not exceeding
    each entry of ``at``."""
    seq = _seq(seq)
    sub = np.sort(np.asarray(sub_indices, dtype=int))
    pos = np.searchsorted(sub, np.asarray(at), side="right") - 1
    if np.any(pos < 0):
        raise TooShort("a query index precedes the first subsequence index")
    return seq[sub[pos]]


def harmonic_ratio(a) -> np.ndarray:
    """``sum_{j=0..k} (a_j - a_{j-1}) / a_j`` divided by ``log a_k`` for an
    increasing positive sequence ``a`` (with ``a_{-1} = 0``)."""
    a = np.asarray(a, dtype=float)
    if a.size < 2:
        raise TooShort("need at least two terms")
    if np.any(a <= 0) or np.any(np.diff(a) <= 0):
        raise NotPositive("sequence must be positive and strictly increasing")
    s = np.cumsum(np.diff(np.concatenate([[0.0], a])) / a)
    with np.errstate(divide="ignore"):
        return s / np.log(a)


# -- Abel and level-set functionals --------------------------------------------

def _positive_spectrum(b):
    b = np.asarray(b)
    if b.ndim == 1:
        vals, vecs = b.astype(float), None
    else:
        vals, vecs = scipy.linalg.eigh(b)
    tol = 1e-12 * (1.0 + float(np.max(np.abs(vals), initial=0.0)))
    if np.any(vals < -tol):
        raise NotPositive(f"minimum eigenvalue {vals.min():.3e} is negative")
    return np.clip(vals, 0.0, None), vecs


def _diagonal_in_basis(a, vecs, n: int) -> np.ndarray:
    if a is None:
        return np.ones(n)
    a = np.asarray(a)
    if a.ndim == 0:
        return np.full(n, complex(a))
    if a.ndim == 1:
        if vecs is not None:
            return np.einsum("ki,k,ki->i", vecs.conj(), a, vecs)
        return a
    if vecs is None:
        return np.diag(a)
    return np.einsum("ki,kl,li->i", vecs.conj(), a, vecs)


def _real_if_close(z):
    z = np.asarray(z)
    return z.real if np.allclose(z.imag, 0.0, atol=1e-12) else z


def abel_functional(a, b, s_grid) -> np.ndarray:
    """``(s-1) Tr(A B^s)`` for each ``s``; ``a=None`` is the identity and 1-D
    inputs are diagonals."""
    vals, vecs = _positive_spectrum(b)
    diag = _diagonal_in_basis(a, vecs, vals.size)
    pos = vals > 0
    logv = np.log(vals[pos])
    out = [(s - 1.0) * np.sum(diag[pos] * np.exp(s * logv)) for s in np.asarray(s_grid, float)]
    return _real_if_close(out)


def level_functional(a, w, eps_grid) -> np.ndarray:
    """``eps Tr(A chi_[eps, inf)(W))`` for each ``eps``."""
    vals, vecs = _positive_spectrum(w)
    diag = _diagonal_in_basis(a, vecs, vals.size)
    order = np.argsort(-vals, kind="stable")
    sv, cs = vals[order], np.cumsum(diag[order])
    out = []
    for eps in np.asarray(eps_grid, float):
        cnt = int(np.searchsorted(-sv, -eps, side="right"))
        out.append(eps * (cs[cnt - 1] if cnt else 0.0))
    return _real_if_close(out)


def matched_scale(n: int) -> tuple[float, float]:
    """Matched pair ``(s, eps)`` for an ``n``-term truncation.

    Uses ``s - 1 = 2/log n`` and ``eps = exp(-1/(s-1))``: at ``s`` the tail of
    ``sum k^-s`` beyond ``n`` carries about ``n^{-(s-1)} = e^{-2}`` of the mass,
    and ``eps`` is the level matching the same logarithmic scale.
    """
    s = 1.0 + 2.0 / math.log(n)
    return s, math.exp(-1.0 / (s - 1.0))


# -- CSV ---------------------------------------------------------------------

SERIES_COLUMNS = ["n", "raw", "cesaro", "logmean", "dixmier"]


def series_csv(diag: SeriesDiagnostics, extra: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra = extra or {}
    w.writerow(SERIES_COLUMNS + list(extra))
    for n in range(diag.raw.size):
        row = [n, repr(float(diag.raw[n]))]
        for name in SERIES_COLUMNS[2:]:
            row.append(repr(float(diag.transforms[name][n])) if name in diag.transforms else "")
        w.writerow(row + list(extra.values()))
    return buf.getvalue()


def read_series_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyInput(f"{path} is empty")
    header = rows[0]
    try:
        float(header[-1])
        has_header = False
    except ValueError:
        has_header = True
    body = rows[1:] if has_header else rows
    if has_header and "raw" in header:
        col = header.index("raw")
    else:
        col = 1 if len(header) > 1 else 0
    vals = np.array([float(r[col]) for r in body if r])
    if vals.size == 0:
        raise EmptyInput(f"{path} has no data rows")
    return vals
