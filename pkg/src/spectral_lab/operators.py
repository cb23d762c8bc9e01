"""Dense Hermitian operators, spectral decomposition and functional calculus.

Everything here works on small dense matrices (a few thousand rows at most);
later modules build their infinite-dimensional objects as truncation families
on top of these primitives.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DomainError, EigenFailure, NonHermitianInput


def hermiticity_tol(a: np.ndarray) -> float:
    return 1e-12 * (1.0 + float(np.max(np.abs(a), initial=0.0)))


@dataclass(frozen=True)
class HermitianOperator:
    """Validated self-adjoint matrix.

    Construction symmetrizes ``(A + A*)/2`` when the input is Hermitian within
    ``1e-12 * (1 + max|A_ij|)`` and raises :class:`NonHermitianInput` otherwise.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise NonHermitianInput(f"expected a non-empty square matrix, got shape {a.shape}")
        a = a.astype(complex) if np.iscomplexobj(a) else a.astype(float)
        dev = np.max(np.abs(a - a.conj().T))
        if dev > hermiticity_tol(a):
            raise NonHermitianInput(f"matrix deviates from its adjoint by {dev:.3e}")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def as_matrix(a) -> np.ndarray:
    if isinstance(a, HermitianOperator):
        return a.entries
    if isinstance(a, SpectralData):
        return a.reconstruct()
    return np.asarray(a)


@dataclass(frozen=True)
class SpectralData:
    """Eigendecomposition ``A = U diag(eigenvalues) U*`` with eigenvalue clusters.

    ``groups`` partitions ``range(dim)`` into runs of numerically coincident
    eigenvalues (consecutive gaps ``<= cluster_tol``).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    groups: tuple
    cluster_tol: float

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def cluster_values(self) -> np.ndarray:
        """One representative (the mean) per cluster."""
        return np.array([self.eigenvalues[g].mean() for g in self.groups])

    @property
    def cluster_index(self) -> np.ndarray:
        """Cluster label of every eigenvalue index."""
        lab = np.empty(self.dim, dtype=int)
        for c, g in enumerate(self.groups):
            lab[g] = c
        return lab

    @property
    def snapped_eigenvalues(self) -> np.ndarray:
        return self.cluster_values[self.cluster_index]

    def projections(self) -> list[np.ndarray]:
        out = []
        for g in self.groups:
            u = self.eigenvectors[:, g]
            out.append(u @ u.conj().T)
        return out

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def default_cluster_tol(eigenvalues: np.ndarray) -> float:
    return 1e-8 * (1.0 + float(np.max(np.abs(eigenvalues), initial=0.0)))


def _group(eigenvalues: np.ndarray, tol: float) -> tuple:
    if len(eigenvalues) == 0:
        return ()
    breaks = np.flatnonzero(np.diff(eigenvalues) > tol) + 1
    return tuple(np.split(np.arange(len(eigenvalues)), breaks))


def spectral_decompose(a, cluster_tol: float | None = None) -> SpectralData:
    if isinstance(a, SpectralData):
        return a
    if not isinstance(a, HermitianOperator):
        a = HermitianOperator(np.asarray(a))
    try:
        w, u = scipy.linalg.eigh(a.entries)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise EigenFailure("non-finite eigenvalues")
    tol = default_cluster_tol(w) if cluster_tol is None else float(cluster_tol)
    w.setflags(write=False)
    u.setflags(write=False)
    return SpectralData(w, u, _group(w, tol), tol)


def _evaluate(f, x: np.ndarray, order: int = 0) -> np.ndarray:
    if hasattr(f, "eval"):
        lo, hi = getattr(f, "domain", (-np.inf, np.inf))
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"{getattr(f, 'name', f)} undefined outside [{lo}, {hi}]")
        y = np.asarray(f.eval(order, x))
    else:
        if order:
            raise DomainError("plain callables carry no derivatives")
        y = np.asarray(f(x))
    y = np.broadcast_to(y, x.shape)
    if not np.all(np.isfinite(y)):
        raise DomainError("function is not finite at some eigenvalue")
    return y


def apply_function(s, f, order: int = 0) -> np.ndarray:
    """``U f(Λ) U*``; with ``order=k`` returns ``f^(k)(A)``.

    Returns a plain array because complex-valued symbols (resolvents) give
    non-Hermitian results.
    """
    s = spectral_decompose(s)
    fx = _evaluate(f, np.asarray(s.eigenvalues), order)
    u = s.eigenvectors
    return (u * fx) @ u.conj().T


def heat_operator(s, t: float) -> np.ndarray:
    if t < 0:
        raise DomainError("heat operator needs t >= 0")
    s = spectral_decompose(s)
    u = s.eigenvectors
    return (u * np.exp(-t * s.eigenvalues)) @ u.conj().T


@dataclass(frozen=True)
class EigenSequence:
    """Values ordered by non-increasing modulus (with multiplicity)."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        mod = np.abs(v)
        if np.any(np.diff(mod) > 1e-12 * (1 + mod.max(initial=0))):
            raise ValueError("values must have non-increasing modulus")

    def __len__(self):
        return len(self.values)

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


def eigenvalue_sequence(a) -> EigenSequence:
    """General eigenvalues ordered by modulus, then real part, then imaginary part.

    Moduli are compared after rounding to 10 significant digits of the
    spectral radius so that ``2`` and ``-2`` computed with roundoff tie.
    """
    a = as_matrix(a)
    try:
        lam = scipy.linalg.eigvals(a)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    if not np.all(np.isfinite(lam)):
        raise EigenFailure("non-finite eigenvalues")
    scale = 1e-10 * (1.0 + np.max(np.abs(lam), initial=0.0))
    mod = np.round(np.abs(lam) / scale)
    re = np.round(lam.real / scale)
    im = np.round(lam.imag / scale)
    order = np.lexsort((np.arange(len(lam)), -im, -re, -mod))
    return EigenSequence(lam[order])


def singular_values(a) -> EigenSequence:
    a = as_matrix(a)
    try:
        sv = scipy.linalg.svdvals(a)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    return EigenSequence(np.sort(sv)[::-1])


def op_norm(a) -> float:
    a = as_matrix(a)
    if a.size == 0:
        return 0.0
    return float(scipy.linalg.svdvals(a)[0])


def trace_norm(a) -> float:
    return float(np.sum(scipy.linalg.svdvals(as_matrix(a))))


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    """GUE sample normalized so the spectrum roughly fills ``[-2*scale, 2*scale]``."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * (z + z.conj().T) / (2.0 * np.sqrt(dim))


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


# -- serialization ---------------------------------------------------------

def matrix_to_json(a) -> str:
    a = np.asarray(as_matrix(a), dtype=complex)
    return json.dumps({"dim": a.shape[0], "re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()})


def matrix_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    n = int(obj["dim"])
    re = np.asarray(obj["re"], dtype=float).reshape(n, n)
    im = np.asarray(obj.get("im", np.zeros(n * n)), dtype=float).reshape(n, n)
    return re + 1j * im if np.any(im) else re


def eigen_sequence_csv(seq: EigenSequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "re", "im", "modulus"])
    v = np.asarray(seq.values, dtype=complex)
    for k, z in enumerate(v):
        w.writerow([k, repr(float(z.real)), repr(float(z.imag)), repr(float(abs(z)))])
    return buf.getvalue()
