"""Symbol functions with analytic derivatives, divided differences, and the
Helffer-Sjostrand almost-analytic functional calculus.

Divided differences are computed from a Hermite/Newton table on sorted nodes:
nodes closer than ``1e-8 * (1 + max|node|)`` are merged, and merged entries use
``f^(k)(x) / k!`` instead of a difference quotient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import numpy.polynomial.polynomial as npoly
import scipy.linalg

from .errors import (
    ConfigError,
    DomainError,
    GridTooCoarse,
    OrderUnavailable,
    SpectrumOutsideGrid,
)
from .operators import as_matrix, spectral_decompose

Deriv = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SymbolFunction:
    """Scalar function with derivatives ``eval(k, x) = f^(k)(x)`` for ``k <= max_order``.

    ``matrix_fn`` optionally evaluates ``f`` on a matrix by a route that does not
    go through an eigendecomposition (``expm``, matrix powers, inverses); it is
    what the identity checks use as their independent left-hand side.
    """

    name: str
    max_order: int
    deriv: Deriv = field(repr=False)
    domain: tuple = (-np.inf, np.inf)
    support: tuple | None = None
    matrix_fn: Callable | None = field(default=None, repr=False)

    def eval(self, k: int, x):
        if k < 0 or k > self.max_order:
            raise OrderUnavailable(f"{self.name}: derivative of order {k} > max_order {self.max_order}")
        x = np.asarray(x, dtype=float)
        return self.deriv(k, x)

    def __call__(self, x):
        return self.eval(0, x)

    def on_matrix(self, a) -> np.ndarray:
        a = as_matrix(a)
        if self.matrix_fn is not None:
            return self.matrix_fn(a)
        from .operators import apply_function

        return apply_function(a, self)

    def lipschitz(self, lo: float, hi: float, samples: int = 2049) -> float:
        if self.max_order < 1:
            raise OrderUnavailable(f"{self.name} has no first derivative")
        xs = np.linspace(lo, hi, samples) if hi > lo else np.array([lo])
        return float(np.max(np.abs(self.eval(1, xs))))


def _falling(m: int, k: int) -> float:
    return float(math.perm(m, k)) if k <= m else 0.0


def exp_symbol(max_order: int = 64) -> SymbolFunction:
    return SymbolFunction("exp", max_order, lambda k, x: np.exp(x), matrix_fn=scipy.linalg.expm)


def power_symbol(m: int, max_order: int = 64) -> SymbolFunction:
    if m < 0:
        raise ConfigError("pow:m needs m >= 0")

    def d(k, x):
        if k > m:
            return np.zeros_like(x)
        return _falling(m, k) * x ** (m - k)

    return SymbolFunction(f"pow:{m}", max_order, d, matrix_fn=lambda a: np.linalg.matrix_power(a, m))


def heat_symbol(t: float, max_order: int = 64) -> SymbolFunction:
    return SymbolFunction(
        f"heat:{t:g}", max_order, lambda k, x: (-t) ** k * np.exp(-t * x),
        matrix_fn=lambda a: scipy.linalg.expm(-t * a),
    )


def resolvent_symbol(re: float, im: float, max_order: int = 64) -> SymbolFunction:
    if im == 0:
        raise ConfigError("resolvent needs a non-real point")
    z = complex(re, im)

    def d(k, x):
        return math.factorial(k) * (z - x) ** (-(k + 1))

    return SymbolFunction(
        f"resolvent:{re:g},{im:g}", max_order, d,
        matrix_fn=lambda a: np.linalg.inv(z * np.eye(a.shape[0]) - a),
    )


def constant_symbol(c: float, max_order: int = 64) -> SymbolFunction:
    def d(k, x):
        return np.full_like(x, c if k == 0 else 0.0)

    return SymbolFunction(f"const:{c:g}", max_order, d,
                          matrix_fn=lambda a: c * np.eye(a.shape[0]))


def polynomial_symbol(coeffs, max_order: int = 64) -> SymbolFunction:
    """``sum_j coeffs[j] x**j``."""
    c = np.asarray(coeffs, dtype=float)

    def d(k, x):
        return npoly.polyval(x, npoly.polyder(c, k)) if k < len(c) else np.zeros_like(x)

    def horner(a):
        out = np.zeros_like(a, dtype=complex if np.iscomplexobj(a) else float)
        eye = np.eye(a.shape[0])
        for cj in c[::-1]:
            out = out @ a + cj * eye
        return out

    return SymbolFunction(f"poly:{','.join(f'{v:g}' for v in c)}", max_order, d, matrix_fn=horner)


def product_symbol(f: SymbolFunction, g: SymbolFunction) -> SymbolFunction:
    def d(k, x):
        return sum(math.comb(k, j) * f.eval(j, x) * g.eval(k - j, x) for j in range(k + 1))

    return SymbolFunction(f"({f.name})*({g.name})", min(f.max_order, g.max_order), d)


# -- smooth transition functions ---------------------------------------------

def _psi_polys(kmax: int) -> list[np.ndarray]:
    # d^k/dt^k exp(-1/t) = P_k(1/t) exp(-1/t),  P_{k+1}(u) = u^2 (P_k(u) - P_k'(u))
    polys = [np.array([1.0])]
    for _ in range(kmax):
        p = polys[-1]
        q = npoly.polysub(p, npoly.polyder(p)) if len(p) > 1 else p
        polys.append(npoly.polymulx(npoly.polymulx(q)))
    return polys


_PSI_CACHE: dict[int, list[np.ndarray]] = {}


def _psi_derivs(t: np.ndarray, kmax: int) -> np.ndarray:
    """Rows k = 0..kmax of the k-th derivative of ``exp(-1/t)`` (zero for t <= 0)."""
    if kmax not in _PSI_CACHE:
        _PSI_CACHE[kmax] = _psi_polys(kmax)
    polys = _PSI_CACHE[kmax]
    t = np.asarray(t, dtype=float)
    out = np.zeros((kmax + 1,) + t.shape)
    pos = t > 0
    if not np.any(pos):
        return out
    u = 1.0 / t[pos]
    logu = np.log(u)
    for k, p in enumerate(polys):
        acc = np.zeros_like(u)
        for j, c in enumerate(p):
            if c != 0.0:
                acc += np.sign(c) * np.exp(np.log(abs(c)) + j * logu - u)
        out[k][pos] = acc
    return out


def smoothstep_derivs(t, kmax: int) -> np.ndarray:
    """Derivatives 0..kmax of the C-infinity step ``psi(t) / (psi(t) + psi(1-t))``."""
    t = np.asarray(t, dtype=float)
    a = _psi_derivs(t, kmax)
    b = _psi_derivs(1.0 - t, kmax)
    sign = (-1.0) ** np.arange(kmax + 1)
    g = a + sign.reshape((-1,) + (1,) * t.ndim) * b
    h = np.zeros_like(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        inside = (t > 0) & (t < 1)
        g0 = np.where(inside, g[0], 1.0)
        h[0] = 1.0 / g0
        for k in range(1, kmax + 1):
            acc = sum(math.comb(k, j) * g[j] * h[k - j] for j in range(1, k + 1))
            h[k] = -acc / g0
    s = np.zeros_like(g)
    for k in range(kmax + 1):
        s[k] = sum(math.comb(k, j) * a[j] * h[k - j] for j in range(k + 1))
        s[k] = np.where(inside, s[k], 0.0)
    s[0] = np.where(t >= 1, 1.0, s[0])
    return s


def bump_symbol(a: float, b: float, c: float, d: float, max_order: int = 16) -> SymbolFunction:
    """C-infinity bump supported on ``[a, d]`` and identically 1 on ``[b, c]``."""
    if not (a < b <= c < d):
        raise ConfigError("bump:a,b,c,d needs a < b <= c < d")
    wl, wr = b - a, d - c

    def dv(k, x):
        x = np.asarray(x, dtype=float)
        left = smoothstep_derivs((x - a) / wl, k)
        right = smoothstep_derivs((d - x) / wr, k)
        total = np.zeros_like(x)
        for j in range(k + 1):
            lj = left[j] / wl**j
            rj = right[k - j] * (-1.0) ** (k - j) / wr ** (k - j)
            total = total + math.comb(k, j) * lj * rj
        return total

    return SymbolFunction(f"bump:{a:g},{b:g},{c:g},{d:g}", max_order, dv, support=(a, d))


def parse_symbol(spec: str) -> SymbolFunction:
    """Build a symbol from its CLI name: ``exp``, ``pow:m``, ``heat:t``,
    ``resolvent:re,im``, ``bump:a,b,c,d``, ``const:c``."""
    name, _, args = spec.partition(":")
    vals = [float(v) for v in args.split(",")] if args else []
    try:
        if name == "exp" and not vals:
            return exp_symbol()
        if name == "pow" and len(vals) == 1 and vals[0] == int(vals[0]):
            return power_symbol(int(vals[0]))
        if name == "heat" and len(vals) == 1:
            return heat_symbol(vals[0])
        if name == "resolvent" and len(vals) == 2:
            return resolvent_symbol(*vals)
        if name == "bump" and len(vals) == 4:
            return bump_symbol(*vals)
        if name == "const" and len(vals) == 1:
            return constant_symbol(vals[0])
    except ConfigError:
        raise
    raise ConfigError(f"unknown symbol {spec!r}")


# -- divided differences ------------------------------------------------------

def confluence_tol(nodes: np.ndarray) -> np.ndarray:
    return 1e-8 * (1.0 + np.max(np.abs(nodes), axis=-1))


def divided_differences(f: SymbolFunction, nodes) -> np.ndarray:
    """Vectorized ``f^[n]`` over the rows of ``nodes`` (shape ``(K, n+1)``)."""
    z = np.sort(np.atleast_2d(np.asarray(nodes, dtype=float)), axis=1)
    K, m = z.shape
    n = m - 1
    tol = confluence_tol(z)
    for j in range(1, m):
        close = z[:, j] - z[:, j - 1] <= tol
        z[:, j] = np.where(close, z[:, j - 1], z[:, j])
    table = [np.asarray(f.eval(0, z[:, i])) for i in range(m)]
    for j in range(1, n + 1):
        eq = [z[:, i + j] == z[:, i] for i in range(m - j)]
        need = np.any(eq)
        if need and j > f.max_order:
            raise OrderUnavailable(
                f"{f.name}: confluent divided difference of order {j} needs f^({j})")
        new = []
        for i in range(m - j):
            den = np.where(eq[i], 1.0, z[:, i + j] - z[:, i])
            quot = (table[i + 1] - table[i]) / den
            if np.any(eq[i]):
                conf = f.eval(j, z[:, i]) / math.factorial(j)
                quot = np.where(eq[i], conf, quot)
            new.append(quot)
        table = new
    return np.asarray(table[0])


def divided_difference(f: SymbolFunction, nodes) -> complex | float:
    val = divided_differences(f, np.asarray(nodes, dtype=float)[None, :])[0]
    return val.item() if hasattr(val, "item") else val


# -- Helffer-Sjostrand ---------------------------------------------------------

@dataclass(frozen=True)
class Cutoff:
    """Even cutoff ``tau`` equal to 1 on ``|s| <= 1`` and 0 on ``|s| >= 2``."""

    name: str
    step: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dstep: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __call__(self, s):
        t = np.clip(np.abs(s) - 1.0, 0.0, 1.0)
        return 1.0 - self.step(t)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        t = np.abs(s) - 1.0
        inside = (t > 0) & (t < 1)
        return np.where(inside, -np.sign(s) * self.dstep(np.clip(t, 0, 1)), 0.0)


def _step7(t):
    return t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)


def _dstep7(t):
    return 140 * t**3 * (1 - t) ** 3


TAU_POLY7 = Cutoff("poly7", _step7, _dstep7)
TAU_EXP = Cutoff("exp", lambda t: smoothstep_derivs(t, 0)[0], lambda t: smoothstep_derivs(t, 1)[1])
CUTOFFS = {"poly7": TAU_POLY7, "exp": TAU_EXP}


@dataclass(frozen=True)
class AlmostAnalyticExtension:
    """``f~(x+iy) = tau(y/<x>) sum_{k<=N} f^(k)(x) (iy)^k / k!``."""

    source: SymbolFunction
    N: int
    tau: Cutoff = TAU_POLY7

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("almost analytic extension needs N >= 1")
        if self.source.max_order < self.N + 1:
            raise OrderUnavailable(f"{self.source.name} needs derivatives up to {self.N + 1}")

    def _taylor(self, x, y):
        iy = 1j * y
        acc = np.zeros(np.broadcast(x, y).shape, dtype=complex)
        for k in range(self.N + 1):
            acc = acc + self.source.eval(k, x) * iy**k / math.factorial(k)
        return acc

    def value(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        jx = np.sqrt(1.0 + x**2)
        return self.tau(y / jx) * self._taylor(x, y)

    def dbar(self, x, y):
        """``d f~ / d zbar``; the Taylor part telescopes to its top term."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        jx = np.sqrt(1.0 + x**2)
        s = y / jx
        sigma = self.tau(s)
        dtau = self.tau.derivative(s)
        d_sigma_dx = dtau * (-y * x / jx**3)
        d_sigma_dy = dtau / jx
        top = self.source.eval(self.N + 1, x) * (1j * y) ** self.N / math.factorial(self.N)
        return 0.5 * (sigma * top + (d_sigma_dx + 1j * d_sigma_dy) * self._taylor(x, y))


@dataclass(frozen=True)
class HSGrid:
    """Midpoint mesh on ``[x_lo, x_hi] x (0, y_max]``; the lower half-plane is
    recovered by conjugate symmetry."""

    x_lo: float
    x_hi: float
    hx: float
    hy: float

    def mesh(self, y_max: float):
        nx = max(1, math.ceil((self.x_hi - self.x_lo) / self.hx - 1e-9))
        hx = (self.x_hi - self.x_lo) / nx
        ny = max(1, math.ceil(y_max / self.hy - 1e-9))
        xs = self.x_lo + (np.arange(nx) + 0.5) * hx
        ys = (np.arange(ny) + 0.5) * self.hy
        return xs, ys, hx, self.hy


def _hs_quadrature(ext: AlmostAnalyticExtension, a: np.ndarray, grid: HSGrid, chunk: int) -> np.ndarray:
    lo, hi = ext.source.support
    xs_all = None
    y_max = 2.0 * math.sqrt(1.0 + max(lo * lo, hi * hi))
    xs, ys, hx, hy = grid.mesh(y_max)
    xs_all = xs[(xs > lo) & (xs < hi)]
    dim = a.shape[0]
    eye = np.eye(dim)
    acc = np.zeros((dim, dim), dtype=complex)
    for x0 in range(0, len(xs_all), max(1, chunk // max(1, len(ys)))):
        xb = xs_all[x0:x0 + max(1, chunk // max(1, len(ys)))]
        X, Y = np.meshgrid(xb, ys, indexing="ij")
        w = ext.dbar(X, Y).ravel()
        z = (X + 1j * Y).ravel()
        keep = w != 0
        w, z = w[keep], z[keep]
        if len(w) == 0:
            continue
        mats = z[:, None, None] * eye - a
        res = np.linalg.inv(mats)
        acc += np.einsum("p,pij->ij", w, res)
    acc *= hx * hy
    return -(acc + acc.conj().T) / np.pi


def hs_apply(f: SymbolFunction, a, N: int = 3, h: float = 1.0 / 256, *, hx: float | None = None,
             hy: float | None = None, tau: str | Cutoff = "poly7", x_range: tuple | None = None,
             tol: float | None = None, chunk: int = 200_000, return_error: bool = False):
    """Approximate ``f(A)`` by the Helffer-Sjostrand integral on a midpoint mesh.

    Resolvents are obtained by batched dense inversion, never from an
    eigendecomposition.  With ``tol`` set, the error is estimated by comparing
    against the mesh with doubled spacing (second-order Richardson) and
    :class:`GridTooCoarse` is raised when the estimate exceeds ``tol``.
    """
    if f.support is None:
        raise DomainError(f"{f.name} is not compactly supported")
    a = np.asarray(as_matrix(a))
    spec = spectral_decompose(a).eigenvalues
    cutoff = CUTOFFS[tau] if isinstance(tau, str) else tau
    ext = AlmostAnalyticExtension(f, N, cutoff)
    lo, hi = f.support
    if x_range is None:
        x_range = (min(lo, spec[0]) - 1.0, max(hi, spec[-1]) + 1.0)
    if not (x_range[0] < spec[0] and spec[-1] < x_range[1]):
        raise SpectrumOutsideGrid(f"spectrum [{spec[0]:.3g}, {spec[-1]:.3g}] not inside {x_range}")
    grid = HSGrid(float(x_range[0]), float(x_range[1]), hx or h, hy or h)
    out = _hs_quadrature(ext, a, grid, chunk)
    err = None
    if tol is not None or return_error:
        coarse = HSGrid(grid.x_lo, grid.x_hi, 2 * grid.hx, 2 * grid.hy)
        err = float(np.linalg.norm(out - _hs_quadrature(ext, a, coarse, chunk), 2)) / 3.0
        if tol is not None and err > tol:
            raise GridTooCoarse(f"estimated quadrature error {err:.2e} > {tol:.2e}")
    return (out, err) if return_error else out
