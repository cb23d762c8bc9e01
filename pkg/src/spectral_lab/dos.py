"""Density of states on discrete spaces, its Dixmier-trace counterpart, the
oscillating diagonal example and translation checks.

The full-space operator is replaced by its compression to a buffered ball
``B(x0, R + buffer)``; ball averages ``Tr(chi_B f(H) chi_B)/|B|`` are taken
over the inner ball ``B(x0, R)`` only.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import BudgetExceeded, BufferExceedsWindow, NegativeSymbol, WindowExceeded
from .operators import HermitianOperator
from .spaces import DiscreteSpace, Weight, weight
from .summation import (
    SeriesDiagnostics,
    convergence_verdict,
    diagnose,
    dixmier_partial,
    log_mean,
)

MAX_DENSE_DIM = 12_000


# -- potentials ---------------------------------------------------------------

@dataclass(frozen=True)
class RandomPotential:
    """I.i.d. uniform values in ``[-amplitude, amplitude]`` attached to lattice
    sites of the box ``[-extent, extent]^d`` (Philox stream in C order), so a
    shifted operator sees the same values at shifted coordinates."""

    seed: int
    amplitude: float
    extent: int
    d: int = 1

    def table(self) -> np.ndarray:
        side = 2 * self.extent + 1
        rng = np.random.Generator(np.random.Philox(key=self.seed))
        return self.amplitude * (2.0 * rng.random(side**self.d) - 1.0)

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords).reshape(len(coords), -1)
        if np.any(np.abs(coords) > self.extent):
            raise WindowExceeded(f"coordinates beyond potential extent {self.extent}")
        side = 2 * self.extent + 1
        idx = np.ravel_multi_index((coords + self.extent).T, (side,) * self.d)
        return self.table()[idx]


@dataclass(frozen=True)
class PeriodicPotential:
    amplitude: float
    period: int

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        x = np.asarray(coords).reshape(len(coords), -1).sum(axis=1)
        return self.amplitude * np.cos(2.0 * np.pi * x / self.period)


def shifted(potential: Callable, shift) -> Callable:
    """``V(x + shift)``: the potential seen after conjugating by the translation."""
    shift = np.atleast_1d(np.asarray(shift))

    def v(coords):
        return potential(np.asarray(coords).reshape(len(coords), -1) + shift)

    return v


# -- Hamiltonians ---------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedHamiltonian:
    """Compression of ``H`` to ``B(x0, radius + buffer_radius)``.

    ``points`` index into ``space``; they are the first points of the space
    (which is sorted by distance), so ``dist`` is ascending.
    """

    space: DiscreteSpace = field(repr=False)
    kind: str
    potential: np.ndarray = field(repr=False)
    radius: float
    buffer_radius: float
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dist(self) -> np.ndarray:
        return self.space.dist[: self.dim]

    @property
    def inner_mask(self) -> np.ndarray:
        return self.space.ball_mask(self.radius)[: self.dim]

    @property
    def operator(self) -> HermitianOperator:
        return HermitianOperator(self.matrix.toarray())


def hamiltonian(space: DiscreteSpace, kind: str = "adjacency", potential=0.0, radius: float | None = None,
                buffer_radius: float = 0.0) -> TruncatedHamiltonian:
    """Adjacency, graph Laplacian (window degree minus adjacency) or diagonal
    operator plus a potential, compressed to the buffered ball.

    ``potential`` is a scalar, a vector over the buffered points or a callable
    of lattice coordinates.
    """
    radius = space.exact_radius - buffer_radius if radius is None else radius
    outer = radius + buffer_radius
    if outer > space.exact_radius + 1e-9:
        raise BufferExceedsWindow(f"ball of radius {outer} exceeds the exact window {space.exact_radius}")
    n = int(np.count_nonzero(space.ball_mask(outer)))
    if callable(potential):
        if space.coords is None:
            raise ValueError("callable potentials need lattice coordinates")
        v = np.asarray(potential(space.coords[:n]), dtype=float)
    else:
        v = np.broadcast_to(np.asarray(potential, dtype=float), (n,)).copy()
    if v.shape != (n,):
        raise ValueError(f"potential has shape {v.shape}, expected ({n},)")
    if kind == "diagonal":
        m = sp.diags(v).tocsr()
    else:
        if space.adjacency is None:
            raise ValueError("space has no adjacency structure")
        adj = space.adjacency[:n][:, :n].tocsr()
        if kind == "adjacency":
            m = (adj + sp.diags(v)).tocsr()
        elif kind == "graph-laplacian":
            deg = np.asarray(adj.sum(axis=1)).ravel()
            m = (sp.diags(deg + v) - adj).tocsr()
        else:
            raise ValueError(f"unknown kind {kind!r}")
    return TruncatedHamiltonian(space, kind, v, float(radius), float(buffer_radius), m)


def _coordinate_tridiagonal(h: TruncatedHamiltonian):
    """Permutation making ``h`` tridiagonal when the space is one-dimensional."""
    c = h.space.coords
    if c is None or c.shape[1] != 1 or h.kind == "diagonal":
        return None
    perm = np.argsort(c[: h.dim, 0], kind="stable")
    m = h.matrix[perm][:, perm].tocoo()
    if m.nnz and np.max(np.abs(m.row - m.col)) > 1:
        return None
    return perm


def eigen_local(h: TruncatedHamiltonian, vectors: bool = True):
    """Eigenvalues and eigenvectors of the compression (columns in point order)."""
    if h.kind == "diagonal":
        order = np.argsort(h.potential, kind="stable")
        if not vectors:
            return h.potential[order], None
        return h.potential[order], sp.identity(h.dim, format="csr")[:, order]
    perm = _coordinate_tridiagonal(h)
    if perm is not None:
        m = h.matrix[perm][:, perm].toarray()
        diag, off = np.diag(m).copy(), np.diag(m, 1).copy()
        if not vectors:
            return scipy.linalg.eigh_tridiagonal(diag, off, eigvals_only=True), None
        w, u = scipy.linalg.eigh_tridiagonal(diag, off)
        out = np.empty_like(u)
        out[perm] = u
        return w, out
    if h.dim > MAX_DENSE_DIM:
        raise BudgetExceeded(f"dense eigenproblem of size {h.dim} above {MAX_DENSE_DIM}")
    a = h.matrix.toarray()
    if not vectors:
        return scipy.linalg.eigvalsh(a), None
    return scipy.linalg.eigh(a)


# -- DOS estimates ---------------------------------------------------------------

@dataclass(frozen=True)
class DOSEstimate:
    """Spectral measure of the compression localized on the inner ball:
    eigenvalue ``l_j`` carries mass ``||chi_B psi_j||^2 / |B|``."""

    eigenvalues: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    radius: float
    buffer: float
    ball_size: int

    def integrated(self, energies) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        return cum[np.searchsorted(self.eigenvalues, np.asarray(energies), side="right")]

    def average(self, f) -> float:
        fx = f(self.eigenvalues) if not hasattr(f, "eval") else f.eval(0, self.eigenvalues)
        return float(np.real(np.sum(fx * self.masses)))

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))


def dos_estimate(h: TruncatedHamiltonian) -> DOSEstimate:
    w, u = eigen_local(h)
    mask = h.inner_mask
    if sp.issparse(u):
        masses = np.asarray(u[mask].multiply(u[mask]).sum(axis=0)).ravel()
    else:
        masses = np.sum(np.abs(u[mask]) ** 2, axis=0)
    b = int(mask.sum())
    return DOSEstimate(w, masses / b, h.radius, h.buffer_radius, b)


def default_energy_grid(eigenvalues, points: int = 512, pad: float = 0.05) -> np.ndarray:
    lo, hi = float(np.min(eigenvalues)), float(np.max(eigenvalues))
    width = max(hi - lo, 1e-12)
    return np.linspace(lo - pad * width, hi + pad * width, points)


@dataclass(frozen=True)
class DOSSeries:
    estimates: list
    energies: np.ndarray
    curves: np.ndarray            # (len(radii), len(energies)) integrated DOS
    cauchy: np.ndarray            # sup-differences between consecutive radii


def dos_ball_average(space: DiscreteSpace, radii, buffer: float, kind: str = "adjacency",
                     potential=0.0, energies=None) -> DOSSeries:
    ests = [dos_estimate(hamiltonian(space, kind, potential, r, buffer)) for r in radii]
    if energies is None:
        energies = default_energy_grid(np.concatenate([e.eigenvalues for e in ests]))
    curves = np.array([e.integrated(energies) for e in ests])
    cauchy = np.max(np.abs(np.diff(curves, axis=0)), axis=1) if len(ests) > 1 else np.zeros(0)
    return DOSSeries(ests, np.asarray(energies), curves, cauchy)


def arcsine_idos(e) -> np.ndarray:
    """Integrated DOS of the free adjacency operator on ``Z``."""
    e = np.clip(np.asarray(e, dtype=float), -2.0, 2.0)
    return 0.5 + np.arcsin(e / 2.0) / np.pi


def square_lattice_idos(e, quad: int = 8192) -> np.ndarray:
    """Integrated DOS on ``Z^2``: law of ``X + Y`` for independent arcsine
    variables, ``int_0^1 F_1(E - 2 cos(pi u)) du`` by the midpoint rule."""
    u = (np.arange(quad) + 0.5) / quad
    x = 2.0 * np.cos(np.pi * u)
    e = np.atleast_1d(np.asarray(e, dtype=float))
    return np.array([arcsine_idos(ei - x).mean() for ei in e])


@dataclass(frozen=True)
class SeparableBoxDOS:
    """Integrated DOS of the free adjacency operator on ``Z^d`` from the
    l-infinity box ``[-R, R]^d`` inside ``[-R-b, R+b]^d``."""

    radius: int
    buffer: int
    d: int
    eig1: np.ndarray = field(repr=False)
    weight1: np.ndarray = field(repr=False)

    def integrated(self, energies) -> np.ndarray:
        lam = self.eig1
        w = self.weight1
        tot = lam
        mass = w
        for _ in range(self.d - 1):
            tot = np.add.outer(tot, lam).ravel()
            mass = np.multiply.outer(mass, w).ravel()
        order = np.argsort(tot, kind="stable")
        cum = np.concatenate([[0.0], np.cumsum(mass[order])])
        b = (2 * self.radius + 1) ** self.d
        return cum[np.searchsorted(tot[order], np.asarray(energies), side="right")] / b


def separable_box_dos(d: int, radius: int, buffer: int) -> SeparableBoxDOS:
    n = 2 * (radius + buffer) + 1
    w, u = scipy.linalg.eigh_tridiagonal(np.zeros(n), np.ones(n - 1))
    inner = slice(buffer, buffer + 2 * radius + 1)
    return SeparableBoxDOS(radius, buffer, d, w, np.sum(u[inner] ** 2, axis=0))


# -- Dixmier side ----------------------------------------------------------------

@dataclass(frozen=True)
class DixmierSide:
    diagnostics: SeriesDiagnostics
    weight_partials: np.ndarray = field(repr=False)
    normalized: np.ndarray = field(repr=False)
    verdict: object
    ball_average: float | None

    @property
    def estimate(self) -> float:
        """Normalized Dixmier partial at the last dyadic checkpoint; read it
        together with ``verdict``, which records the tail spread."""
        return float(self.normalized[self.diagnostics.checkpoints[-1]])


def _symbol_values(f, x):
    return np.real_if_close(f.eval(0, x) if hasattr(f, "eval") else f(x))


def dixmier_side(h: TruncatedHamiltonian, f, w: Weight | None = None, window: int = 4, tol: float = 0.05,
                 ball_average: float | None = None) -> DixmierSide:
    """Eigenvalues of ``f(H)^{1/2} M_w f(H)^{1/2}`` fed to Dixmier partial sums.

    The partial sums are divided by those of ``M_w`` at the same ``n``, which
    turns the statement ``Tr_w(f(H) M_w) = Tr_w(M_w) * (ball-average limit)``
    into a direct comparison with the ball average.
    """
    wv = (weight(h.space) if w is None else w).values[: h.dim]
    lam, u = eigen_local(h)
    fx = np.asarray(_symbol_values(f, lam), dtype=float)
    if np.any(fx < -1e-14):
        raise NegativeSymbol("dixmier_side needs f >= 0 on the spectrum")
    root = np.sqrt(np.clip(fx, 0.0, None))
    if h.kind == "diagonal":
        fvals = np.sqrt(np.clip(np.asarray(_symbol_values(f, h.potential), float), 0, None))
        eig = fvals**2 * wv
    else:
        # non-zero spectrum of S M_w S equals that of M_w^{1/2} f(H) M_w^{1/2}
        s = (u * root) @ u.T
        sw = np.sqrt(wv)
        eig = scipy.linalg.eigvalsh(sw[:, None] * (s @ s.T) * sw[None, :])
    eig = np.sort(np.clip(eig, 0.0, None))[::-1]
    wsorted = np.sort(wv)[::-1]
    diag = diagnose(eig, ("dixmier",), window=window, tol=tol)
    wp = dixmier_partial(wsorted)
    normalized = diag.transforms["dixmier"] / wp
    verdict = convergence_verdict(normalized, window, tol)
    return DixmierSide(diag, wp, normalized, verdict, ball_average)


def modulated_sum_gap(t: np.ndarray, order=None) -> np.ndarray:
    """``|sum_{k<=n} lambda(k, T) - sum_{k<=n} <e_k, T e_k>|`` for every ``n``,
    with ``e_k`` the coordinate basis in the given order."""
    t = np.asarray(t)
    if order is not None:
        t = t[np.ix_(order, order)]
    lam = scipy.linalg.eigvals(t)
    lam = lam[np.argsort(-np.abs(lam), kind="stable")]
    return np.abs(np.cumsum(lam) - np.cumsum(np.diag(t)))


# -- the oscillating diagonal example ---------------------------------------------

def block_sequence(n_max: int) -> np.ndarray:
    """``lambda_0..lambda_{n_max}``: zero on ``[2^{2m}+1, 2^{2m+1}]``, one on
    ``[2^{2m-1}+1, 2^{2m}]``, with ``lambda_0 = 0`` and ``lambda_1 = 1``."""
    lam = np.zeros(n_max + 1)
    if n_max >= 1:
        lam[1] = 1.0
    m = 1
    while 2 ** (2 * m - 1) + 1 <= n_max:
        lam[2 ** (2 * m - 1) + 1: min(2 ** (2 * m), n_max) + 1] = 1.0
        m += 1
    return lam


@dataclass(frozen=True)
class DiagonalExample:
    sequence: np.ndarray = field(repr=False)
    diagnostics: SeriesDiagnostics
    cesaro_even: dict          # m -> C at 2^{2m}
    cesaro_odd: dict           # m -> C at 2^{2m+1}
    symbol_log_mean: np.ndarray = field(repr=False)


def diagonal_example(n_max: int, f=None, window: int = 4, tol: float = 0.05) -> DiagonalExample:
    if n_max < 4:
        raise ValueError("n_max must be at least 4")
    lam = block_sequence(n_max)
    diag = diagnose(lam, ("cesaro", "logmean"), window=window, tol=tol)
    c = diag.transforms["cesaro"]
    even = {m: float(c[2 ** (2 * m)]) for m in range(1, 64) if 2 ** (2 * m) <= n_max}
    odd = {m: float(c[2 ** (2 * m + 1)]) for m in range(0, 64) if 2 ** (2 * m + 1) <= n_max}
    fl = log_mean(_symbol_values(f, lam) if f is not None else lam)
    return DiagonalExample(lam, diag, even, odd, fl)


# -- translation equivariance ----------------------------------------------------------

@dataclass(frozen=True)
class TranslationReport:
    radii: np.ndarray
    residuals: np.ndarray


def translation_check(space: DiscreteSpace, potential: Callable, shift, radii, buffer: float,
                      kind: str = "adjacency", energies=None) -> TranslationReport:
    """Sup-difference of integrated DOS between ``H`` and ``U_n H U_n^*`` per radius.

    The translated operator has potential ``V(. + n)`` on the same window.
    """
    moved = shifted(potential, shift)
    res = []
    for r in radii:
        a = dos_estimate(hamiltonian(space, kind, potential, r, buffer))
        b = dos_estimate(hamiltonian(space, kind, moved, r, buffer))
        grid = energies if energies is not None else default_energy_grid(
            np.concatenate([a.eigenvalues, b.eigenvalues]))
        res.append(float(np.max(np.abs(a.integrated(grid) - b.integrated(grid)))))
    return TranslationReport(np.asarray(radii, float), np.array(res))


def idos_csv(energies, curves: dict, extra: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra = extra or {}
    w.writerow(["energy"] + list(curves) + list(extra))
    for i, e in enumerate(energies):
        w.writerow([repr(float(e))] + [repr(float(v[i])) for v in curves.values()] + list(extra.values()))
    return buf.getvalue()
