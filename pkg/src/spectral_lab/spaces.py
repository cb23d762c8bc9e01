"""Discrete metric spaces with a base point: lattice windows, graphs with the
shortest-path metric and percolation clusters; ball tables, the radial weight
``w(x) = 1/(1 + |B(x0, d(x0, x))|)`` and ball-ratio diagnostics.

Every space is a finite window.  ``exact_radius`` records up to which radius
the balls around the base point are complete; ball tables never go beyond it.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .errors import DisconnectedBase, OriginClosed, TooShort, WindowTooLarge

RADIUS_TOL = 1e-9
DEFAULT_MAX_POINTS = 4_000_000


@dataclass(frozen=True)
class DiscreteSpace:
    """Finite window of a discrete metric space, points sorted by distance to the base.

    ``coords`` holds integer lattice coordinates (or ``None`` for abstract
    graphs); ``adjacency`` is the nearest-neighbour / graph structure used by
    Hamiltonians.  Point 0 is always the base point.
    """

    dist: np.ndarray = field(repr=False)
    coords: np.ndarray | None = field(repr=False)
    adjacency: sp.csr_matrix | None = field(repr=False)
    exact_radius: float
    provenance: dict
    p: float | None = None

    @property
    def size(self) -> int:
        return self.dist.size

    @property
    def base(self) -> int:
        return 0

    def metric(self, i: int, j: int) -> float:
        if self.coords is not None and self.p is not None:
            diff = np.abs(self.coords[i] - self.coords[j]).astype(float)
            return float(np.max(diff)) if math.isinf(self.p) else float(np.sum(diff**self.p) ** (1 / self.p))
        if self.adjacency is None:
            raise ValueError("space carries no metric structure")
        d = shortest_path(self.adjacency, unweighted=True, indices=i)
        return float(d[j])

    def ball_mask(self, r: float) -> np.ndarray:
        return self.dist <= r + RADIUS_TOL * (1 + r)


def _lp_dist(x: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(x)
    if math.isinf(p):
        return a.max(axis=1).astype(float)
    if p == 1:
        return a.sum(axis=1).astype(float)
    if p == 2:
        return np.sqrt((a.astype(np.int64) ** 2).sum(axis=1).astype(float))
    return (a.astype(float) ** p).sum(axis=1) ** (1.0 / p)


def _box(d: int, r: int) -> np.ndarray:
    axes = [np.arange(-r, r + 1)] * d
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


def _grid_adjacency(coords: np.ndarray) -> sp.csr_matrix:
    """Nearest-neighbour (unit l1 step) adjacency among the given integer points."""
    n, d = coords.shape
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo + 1
    key = np.ravel_multi_index((coords - lo).T, span)
    kord = np.argsort(key)
    skey = key[kord]
    rows, cols = [], []
    for a in range(d):
        shifted = coords.copy()
        shifted[:, a] += 1
        ok = shifted[:, a] - lo[a] < span[a]
        k = np.ravel_multi_index((shifted[ok] - lo).T, span)
        src = np.flatnonzero(ok)
        pos = np.clip(np.searchsorted(skey, k), 0, n - 1)
        m = skey[pos] == k
        hit = kord[pos]
        rows.append(src[m])
        cols.append(hit[m])
    r = np.concatenate(rows) if rows else np.zeros(0, int)
    c = np.concatenate(cols) if cols else np.zeros(0, int)
    adj = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n))
    return (adj + adj.T).tocsr()


def _sorted(dist, coords):
    keys = [coords[:, a] for a in range(coords.shape[1] - 1, -1, -1)] if coords is not None else []
    order = np.lexsort(tuple(keys) + (np.round(dist / RADIUS_TOL),)) if keys else np.argsort(dist, kind="stable")
    return order


def lattice_space(d: int, p: float, r_max: float, max_points: int = DEFAULT_MAX_POINTS,
                  with_adjacency: bool = True) -> DiscreteSpace:
    """All points of ``Z^d`` with ``||x||_p <= r_max``, base point the origin."""
    if d < 1 or r_max <= 0 or p < 1:
        raise ValueError("need d >= 1, p >= 1, r_max > 0")
    ri = int(math.floor(r_max + RADIUS_TOL))
    if (2 * ri + 1) ** d > 4 * max_points:
        raise WindowTooLarge(f"box of {(2 * ri + 1) ** d} points exceeds cap")
    pts = _box(d, ri)
    if p == 2:
        keep = (pts.astype(np.int64) ** 2).sum(axis=1) <= r_max * r_max + RADIUS_TOL
    else:
        keep = _lp_dist(pts, p) <= r_max * (1 + 1e-12) + RADIUS_TOL
    pts = pts[keep]
    if pts.shape[0] > max_points:
        raise WindowTooLarge(f"{pts.shape[0]} points exceed cap {max_points}")
    dist = _lp_dist(pts, p)
    order = _sorted(dist, pts)
    pts, dist = pts[order], dist[order]
    adj = _grid_adjacency(pts) if with_adjacency else None
    return DiscreteSpace(dist, pts, adj, float(r_max),
                         {"kind": "lattice", "d": d, "p": p, "R_max": r_max}, p=float(p))


def graph_space(adjacency, base: int = 0, coords=None, exact_radius: float = math.inf,
                provenance: dict | None = None) -> DiscreteSpace:
    """Connected component of ``base`` with the shortest-path metric."""
    adj = sp.csr_matrix(adjacency)
    n = adj.shape[0]
    if n == 0 or not 0 <= base < n:
        raise DisconnectedBase(f"base {base} is not a vertex of a {n}-vertex graph")
    adj = ((adj + adj.T) != 0).astype(float).tocsr()
    dist = shortest_path(adj, unweighted=True, indices=base, directed=False)
    comp = np.flatnonzero(np.isfinite(dist))
    dist = dist[comp]
    cc = None if coords is None else np.asarray(coords)[comp]
    order = np.lexsort((comp, dist))
    comp, dist = comp[order], dist[order]
    if cc is not None:
        cc = cc[order]
    sub = adj[comp][:, comp].tocsr()
    prov = dict(provenance or {"kind": "graph"})
    prov.setdefault("dropped_vertices", int(n - comp.size))
    return DiscreteSpace(dist, cc, sub, float(exact_radius), prov)


def path_graph(n: int) -> sp.csr_matrix:
    i = np.arange(n - 1)
    a = sp.coo_matrix((np.ones(n - 1), (i, i + 1)), shape=(n, n))
    return (a + a.T).tocsr()


def binary_tree(depth: int) -> sp.csr_matrix:
    """Rooted binary tree with ``2^{depth+1} - 1`` vertices, root 0."""
    n = 2 ** (depth + 1) - 1
    child = np.arange(1, n)
    a = sp.coo_matrix((np.ones(n - 1), ((child - 1) // 2, child)), shape=(n, n))
    return (a + a.T).tocsr()


def grid_graph(d: int, r: int) -> tuple[sp.csr_matrix, np.ndarray, int]:
    """Nearest-neighbour graph on the box ``[-r, r]^d``; returns (adjacency, coords, origin)."""
    pts = _box(d, r)
    origin = int(np.flatnonzero(np.all(pts == 0, axis=1))[0])
    return _grid_adjacency(pts), pts, origin


def percolation_cluster(d: int, p_open: float, mode: str, seed: int, r_max: int) -> DiscreteSpace:
    """Open cluster of the origin inside the box ``[-r_max, r_max]^d``.

    Randomness comes from a Philox counter-based generator keyed by ``seed``:
    bond mode draws one uniform per (site, axis) pair in C order of the box,
    site mode one per site.  Balls of chemical radius ``<= r_max`` cannot leave
    the box, so ``exact_radius = r_max``.
    """
    if not 0.0 <= p_open <= 1.0:
        raise ValueError("p_open must lie in [0, 1]")
    if mode not in ("bond", "site"):
        raise ValueError("mode must be 'bond' or 'site'")
    side = 2 * r_max + 1
    n = side**d
    if n > DEFAULT_MAX_POINTS:
        raise WindowTooLarge(f"box of {n} sites exceeds cap")
    pts = _box(d, r_max)
    origin = n // 2
    rng = np.random.Generator(np.random.Philox(key=seed))
    idx = np.arange(n).reshape((side,) * d)
    if mode == "bond":
        u = rng.random(n * d).reshape(n, d)
        site_open = np.ones(n, dtype=bool)
    else:
        site_open = rng.random(n) < p_open
        if not site_open[origin]:
            raise OriginClosed(f"origin closed for seed {seed}")
    rows, cols = [], []
    for a in range(d):
        src = np.take(idx, np.arange(side - 1), axis=a).ravel()
        dst = np.take(idx, np.arange(1, side), axis=a).ravel()
        ok = site_open[src] & site_open[dst]
        if mode == "bond":
            ok &= u[src, a] < p_open
        rows.append(src[ok])
        cols.append(dst[ok])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    adj = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n)).tocsr()
    prov = {"kind": "percolation", "d": d, "p_open": p_open, "mode": mode, "seed": seed,
            "R_max": r_max, "rng": "Philox"}
    return graph_space(adj, origin, coords=pts, exact_radius=r_max, provenance=prov)


# -- ball tables and weights ---------------------------------------------------

@dataclass(frozen=True)
class BallTable:
    radii: np.ndarray
    ball_volumes: np.ndarray
    sphere_counts: np.ndarray

    def __post_init__(self):
        assert np.all(np.diff(self.radii) > 0)
        assert np.all(self.sphere_counts >= 1)
        assert self.ball_volumes[-1] == self.sphere_counts.sum()

    def __len__(self):
        return self.radii.size


def _radius_groups(dist: np.ndarray):
    breaks = np.flatnonzero(np.diff(dist) > RADIUS_TOL * (1 + dist[1:])) + 1
    starts = np.concatenate([[0], breaks])
    return starts, np.diff(np.concatenate([starts, [dist.size]]))


def ball_table(space: DiscreteSpace, exact_only: bool = True) -> BallTable:
    dist = space.dist
    if exact_only:
        dist = dist[space.ball_mask(space.exact_radius)]
    starts, counts = _radius_groups(dist)
    return BallTable(dist[starts].copy(), np.cumsum(counts), counts)


def table_from_coordination(sphere_counts, radii=None) -> BallTable:
    """Ball table from an externally supplied coordination sequence."""
    s = np.asarray(sphere_counts, dtype=np.int64)
    r = np.arange(s.size, dtype=float) if radii is None else np.asarray(radii, dtype=float)
    return BallTable(r, np.cumsum(s), s)


@dataclass(frozen=True)
class Weight:
    values: np.ndarray = field(repr=False)

    def sorted_desc(self) -> np.ndarray:
        return np.sort(self.values)[::-1]


def weight(space: DiscreteSpace) -> Weight:
    """``w(x) = 1/(1 + |B(x0, d(x0, x))|)`` for every point of the window.

    Points beyond ``exact_radius`` use the windowed ball count.
    """
    starts, counts = _radius_groups(space.dist)
    vols = np.repeat(np.cumsum(counts), counts)
    return Weight(1.0 / (1.0 + vols))


def harmonic_weight_sum(table: BallTable) -> tuple[np.ndarray, np.ndarray]:
    """``sum_{x in B(r_k)} w(x)`` and ``log |B(r_k)|`` per radius."""
    w = table.sphere_counts / (1.0 + table.ball_volumes)
    return np.cumsum(w), np.log(table.ball_volumes)


@dataclass(frozen=True)
class PropertyCReport:
    ratios: np.ndarray
    tail_ratio: float
    verdict: str                 # trending-to-1 | fails-(C) | undecided
    window: int
    tol: float
    exact_radius: float


def property_c_diagnostic(table: BallTable, window: int = 20, tol: float = 0.05,
                          fail_margin: float = 0.25, exact_radius: float = math.nan) -> PropertyCReport:
    """Ball ratios ``|B(r_{k+1})| / |B(r_k)|`` with an empirical verdict.

    ``tail_ratio`` is the largest ratio over the last ``window`` radii.  The
    verdict is ``fails-(C)`` when every tail ratio exceeds ``1 + fail_margin``,
    ``trending-to-1`` when the tail stays within ``1 + tol`` and its mean excess
    is no larger than over the first half of all ratios, and ``undecided``
    otherwise.
    """
    if len(table) < window + 1:
        raise TooShort(f"{len(table)} radii, need at least {window + 1}")
    vols = table.ball_volumes.astype(float)
    ratios = vols[1:] / vols[:-1]
    tail = ratios[-window:]
    early = ratios[: ratios.size // 2]
    if tail.min() > 1.0 + fail_margin:
        verdict = "fails-(C)"
    elif tail.max() <= 1.0 + tol and tail.mean() <= early.mean():
        verdict = "trending-to-1"
    else:
        verdict = "undecided"
    return PropertyCReport(ratios, float(tail.max()), verdict, window, tol, exact_radius)


def check_metric(space: DiscreteSpace, rng: np.random.Generator, n_triples: int = 50) -> float:
    """Largest triangle-inequality violation on random triples (should be <= 0)."""
    worst = -math.inf
    for _ in range(n_triples):
        i, j, k = rng.integers(0, space.size, 3)
        worst = max(worst, space.metric(i, k) - space.metric(i, j) - space.metric(j, k))
    return worst


# -- export ---------------------------------------------------------------------

def ball_table_csv(table: BallTable, extra: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra = extra or {}
    w.writerow(["k", "r_k", "ball", "sphere", "ratio"] + list(extra))
    vols = table.ball_volumes
    for k in range(len(table)):
        ratio = repr(float(vols[k + 1] / vols[k])) if k + 1 < len(table) else ""
        w.writerow([k, repr(float(table.radii[k])), int(vols[k]), int(table.sphere_counts[k]), ratio]
                   + list(extra.values()))
    return buf.getvalue()


def space_snapshot(space: DiscreteSpace) -> str:
    return json.dumps({"provenance": space.provenance, "points": space.size,
                       "exact_radius": space.exact_radius}, sort_keys=True, default=float)
