"""The acceptance battery: sixteen numbered checks, each producing a CSV table
and a one-line verdict.

CSV tables carry no timings, so re-running with the same configuration must
reproduce them byte for byte; timings go to ``summary.json``.
"""
from __future__ import annotations

import hashlib
import json
import math
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import divdiff, dos, moi, spaces, summation, trunc
from .io import csv_text, write_text_atomic
from .operators import apply_function, op_norm, random_hermitian


@dataclass(frozen=True)
class AcceptanceConfig:
    seed: int = 20240601
    items: tuple = tuple(range(1, 17))
    moi_trials: int = 100
    moi_dim: int = 6
    gateaux_instances: int = 20
    taylor_instances: int = 5
    delta_instances: int = 10
    delta_spread: float = 0.05
    block_n_max: int = 2**21
    z2_points: int = 10**5
    dos_radius: int = 2000
    dos_buffer: int = 50
    potential_amplitude: float = 0.5
    bump: str = "bump:-1,-0.5,0.5,1"
    percolation_seeds: tuple = tuple(range(10))
    percolation_radius: int = 200
    widom_K: int = 64
    szego_K: int = 512
    weyl_lambda: float = 1e4
    abel_n: int = 10**5
    hs_instances: int = 10
    hs_bump: str = "bump:-2.5,-1,1,2.5"
    hs_h: float = 1.0 / 256

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: str
    tolerance: str
    header: list = field(repr=False)
    rows: list = field(repr=False)
    runtime: float = 0.0

    def line(self) -> str:
        return (f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: "
                f"{self.measured} (tolerance {self.tolerance}) [{self.runtime:.1f}s]")


def _rng(cfg: AcceptanceConfig, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=cfg.seed + 1000 * stream))


def _f(x) -> str:
    return repr(float(x))


# -- individual criteria -----------------------------------------------------

def c01_moi_identities(cfg):
    rng = _rng(cfg, 1)
    symbols = [divdiff.exp_symbol(), divdiff.power_symbol(3), divdiff.resolvent_symbol(0.0, 1.0)]
    rows, ok, worst = [], True, 0.0
    for t in range(cfg.moi_trials):
        a = random_hermitian(rng, cfg.moi_dim)
        b = random_hermitian(rng, cfg.moi_dim)
        for f in symbols:
            r = moi.identity_residuals(f, a, b)
            ok &= r.passed
            worst = max(worst, r.commutator_residual / r.scale, r.perturbation_residual / r.scale)
            rows.append([t, f.name, _f(r.commutator_residual), _f(r.perturbation_residual), _f(r.scale), int(r.passed)])
    return (ok, f"worst residual/scale {worst:.3g}", "1e-9*(1+|A|+|B|)*Lip(f)",
            ["trial", "f", "commutator_residual", "perturbation_residual", "scale", "pass"], rows)


def _fd_derivative(f, a, b, n: int, h: float) -> np.ndarray:
    g = f.matrix_fn
    if n == 1:
        return (g(a + h * b) - g(a - h * b)) / (2 * h)
    return (g(a + h * b) - 2 * g(a) + g(a - h * b)) / (h * h) / 2.0


def c02_gateaux(cfg):
    rng = _rng(cfg, 2)
    f = divdiff.exp_symbol()
    rows, worst = [], 0.0
    for t in range(cfg.gateaux_instances):
        a = random_hermitian(rng, 5)
        b = random_hermitian(rng, 5)
        for n in (1, 2):
            h = 1e-4 if n == 1 else 1e-3
            fd = (4 * _fd_derivative(f, a, b, n, h / 2) - _fd_derivative(f, a, b, n, h)) / 3
            got = moi.gateaux_derivative(f, a, b, n)
            rel = op_norm(got - fd) / op_norm(fd)
            worst = max(worst, rel)
            rows.append([t, n, _f(rel)])
    return worst <= 1e-5, f"max relative error {worst:.3g}", "1e-5", ["instance", "order", "relative_error"], rows


def c03_taylor(cfg):
    rng = _rng(cfg, 3)
    f = divdiff.exp_symbol()
    ts = np.array([1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    rows, slopes = [], []
    for t in range(cfg.taylor_instances):
        rep = moi.taylor_remainder(f, random_hermitian(rng, 5), random_hermitian(rng, 5), 2, ts)
        slopes.append(rep.slope)
        rows += [[t, _f(s), _f(e), _f(rep.slope)] for s, e in zip(ts, rep.errors)]
    ok = all(2.8 <= s <= 3.2 for s in slopes)
    return ok, f"slopes {min(slopes):.4f}..{max(slopes):.4f}", "[2.8, 3.2]", ["instance", "t", "remainder", "slope"], rows


def c04_delta(cfg):
    rng = _rng(cfg, 4)
    f = divdiff.exp_symbol()
    rows, worst = [], 0.0
    for t in range(cfg.delta_instances):
        h = random_hermitian(rng, 4)
        h *= cfg.delta_spread / op_norm(h)
        v = random_hermitian(rng, 4)
        v *= 1e-2 / op_norm(v)
        err = op_norm(moi.delta_expansion(f, h, v, 3, 3) - f.matrix_fn(h + v))
        worst = max(worst, err)
        rows.append([t, _f(op_norm(h)), _f(err)])
    return worst <= 1e-7, f"max error {worst:.3g}", "1e-7", ["instance", "norm_H", "error"], rows


def c05_block(cfg):
    ex = dos.diagonal_example(cfg.block_n_max)
    lm = ex.diagnostics.transforms["logmean"][2**20]
    rows, ok = [], True
    for m in (8, 9, 10):
        e, o = ex.cesaro_even[m], ex.cesaro_odd[m]
        ok &= abs(e - 2 / 3) <= 0.01 and abs(o - 1 / 3) <= 0.01
        rows += [["cesaro", 2 ** (2 * m), _f(e), _f(2 / 3)], ["cesaro", 2 ** (2 * m + 1), _f(o), _f(1 / 3)]]
    ok &= abs(lm - 0.5) <= 0.02
    rows.append(["logmean", 2**20, _f(lm), _f(0.5)])
    return (ok, f"Cesaro even {ex.cesaro_even[10]:.4f}, odd {ex.cesaro_odd[10]:.4f}, log-mean {lm:.4f}",
            "0.01 / 0.01 / 0.02", ["transform", "n", "value", "target"], rows)


def c06_mw_trace(cfg):
    r = math.sqrt(cfg.z2_points / math.pi) + 3
    sp_ = spaces.lattice_space(2, 2, r, with_adjacency=False)
    w = spaces.weight(sp_).sorted_desc()
    part = summation.dixmier_partial(w)
    n = cfg.z2_points
    cps = [c for c in summation.checkpoints(n) if c <= n][-3:]
    errs = [abs(1 - part[c]) for c in cps]
    ok = abs(1 - part[n]) <= 0.25 and errs[0] > errs[1] > errs[2]
    rows = [[c, _f(part[c]), _f(e)] for c, e in zip(cps, errs)] + [[n, _f(part[n]), _f(abs(1 - part[n]))]]
    return ok, f"partial sum at n={n}: {part[n]:.4f}; checkpoint errors {', '.join(f'{e:.4f}' for e in errs)}", \
        "0.25, strictly decreasing", ["n", "dixmier_partial", "error"], rows


def _z1(cfg):
    return spaces.lattice_space(1, 2, cfg.dos_radius + cfg.dos_buffer)


def c07_dos_1d(cfg):
    sp_ = _z1(cfg)
    grid = np.linspace(-2.2, 2.2, 512)
    full = dos.dos_estimate(dos.hamiltonian(sp_, "adjacency", 0.0, cfg.dos_radius, cfg.dos_buffer))
    half = dos.dos_estimate(dos.hamiltonian(sp_, "adjacency", 0.0, cfg.dos_radius, cfg.dos_buffer // 2))
    a, b, ref = full.integrated(grid), half.integrated(grid), dos.arcsine_idos(grid)
    err, dbuf = float(np.max(np.abs(a - ref))), float(np.max(np.abs(a - b)))
    rows = [[_f(e), _f(x), _f(y), _f(z)] for e, x, y, z in zip(grid, a, b, ref)]
    return (err <= 0.02 and dbuf <= 0.005, f"sup error {err:.3g}, buffer-halving change {dbuf:.3g}", "0.02 / 0.005",
            ["energy", "idos_buffer", "idos_half_buffer", "arcsine"], rows)


def _potential(cfg):
    return dos.RandomPotential(cfg.seed, cfg.potential_amplitude, cfg.dos_radius + cfg.dos_buffer + 2)


def c08_weighted_trace_vs_ball_average(cfg):
    sp_ = _z1(cfg)
    f = divdiff.parse_symbol(cfg.bump)
    h = dos.hamiltonian(sp_, "adjacency", _potential(cfg), cfg.dos_radius, cfg.dos_buffer)
    avg = dos.dos_estimate(h).average(f)
    side = dos.dixmier_side(h, f, ball_average=avg)
    diff = abs(side.estimate - avg)
    cps = side.diagnostics.checkpoints
    rows = [[int(c), _f(side.normalized[c]), _f(avg)] for c in cps]
    return (diff <= 0.05, f"Dixmier side {side.estimate:.4f} [{side.verdict.label()}] vs ball average {avg:.4f}",
            "0.05", ["n", "normalized_dixmier", "ball_average"], rows)


def c09_property_c(cfg):
    rows = []
    z2 = spaces.ball_table(spaces.lattice_space(2, 2, 60, with_adjacency=False))
    rho = z2.ball_volumes[101] / z2.ball_volumes[100]
    rows.append(["Z2_p2", 100, _f(rho)])
    tree = spaces.ball_table(spaces.graph_space(spaces.binary_tree(12)))
    tr = spaces.property_c_diagnostic(tree, window=5)
    rows.append(["binary_tree", len(tree) - 2, _f(tr.ratios[-1])])
    good = 0
    for s in cfg.percolation_seeds:
        tb = spaces.ball_table(spaces.percolation_cluster(2, 0.7, "bond", int(s), cfg.percolation_radius))
        rep = spaces.property_c_diagnostic(tb)
        good += rep.tail_ratio <= 1.05
        rows.append([f"percolation_seed_{s}", len(tb) - 2, _f(rep.tail_ratio)])
    ok = abs(rho - 1) <= 0.03 and abs(tr.ratios[-1] - 2) <= 0.01 and good >= len(cfg.percolation_seeds) - 1
    return (ok, f"Z2 ratio {rho:.4f}, tree ratio {tr.ratios[-1]:.4f}, percolation {good}/{len(cfg.percolation_seeds)} seeds <= 1.05",
            "0.03 / 0.01 / >= 9 of 10", ["case", "k", "ratio"], rows)


def c10_widom(cfg):
    t = trunc.build_triple("circle", cfg.widom_K)
    rep = trunc.widom_ratio(t, trunc.fourier_operator(t, {1: 1.0}), trunc.fourier_operator(t, {-1: 1.0}),
                            np.arange(cfg.widom_K))
    exact = 1.0 / (2 * np.floor(rep.lambdas) + 1)
    err = float(np.max(np.abs(rep.values - exact)))
    rows = [[_f(l), int(n), _f(v), _f(e)] for l, n, v, e in zip(rep.lambdas, rep.trace_p, rep.values, exact)]
    return err <= 1e-12, f"max deviation {err:.3g}", "1e-12", ["lambda", "trace_p", "ratio", "exact"], rows


def c11_szego(cfg):
    t = trunc.build_triple("toeplitz", cfg.szego_K)
    a = trunc.fourier_operator(t, {1: 0.5, -1: 0.5})
    rep = trunc.szego_functional(t, a, lambda x: x**2, [cfg.szego_K], reference=0.5)
    v = float(rep.values[-1])
    return abs(v - 0.5) <= 0.01, f"value {v:.5f}", "0.01", ["lambda", "trace_p", "value", "reference"], \
        [[_f(rep.lambdas[-1]), int(rep.trace_p[-1]), _f(v), _f(0.5)]]


def c12_weyl(cfg):
    tab = trunc.weyl_counting(2, cfg.weyl_lambda)
    n = int(tab.count(cfg.weyl_lambda))
    ratio = n / cfg.weyl_lambda
    return abs(ratio - math.pi) <= 0.05, f"N/lambda {ratio:.5f}", "0.05 of pi", ["lambda", "count", "ratio"], \
        [[_f(cfg.weyl_lambda), n, _f(ratio)]]


def c13_abel_level(cfg):
    n = cfg.abel_n
    w = 1.0 / (np.arange(n) + 1.0)
    s, eps = summation.matched_scale(n)
    abel = float(summation.abel_functional(None, w, [s])[0])
    level = float(summation.level_functional(None, w, [eps])[0])
    ok = abs(abel - 1) <= 0.05 and abs(level - 1) <= 0.05 and abs(abel - level) <= 0.05
    return ok, f"Abel {abel:.4f} at s={s:.4f}, level {level:.4f} at eps={eps:.3g}", "0.05", \
        ["s", "abel", "eps", "level"], [[_f(s), _f(abel), _f(eps), _f(level)]]


def c14_helffer_sjostrand(cfg):
    rng = _rng(cfg, 14)
    f = divdiff.parse_symbol(cfg.hs_bump)
    rows, worst, worst_tau = [], 0.0, 0.0
    for t in range(cfg.hs_instances):
        a = random_hermitian(rng, 4)
        ref = apply_function(a, f)
        p7 = divdiff.hs_apply(f, a, N=3, h=cfg.hs_h, tau="poly7")
        ex = divdiff.hs_apply(f, a, N=3, h=cfg.hs_h, tau="exp")
        e1, e2 = op_norm(p7 - ref), op_norm(ex - ref)
        dt = op_norm(p7 - ex)
        worst, worst_tau = max(worst, e1, e2), max(worst_tau, dt)
        rows.append([t, _f(e1), _f(e2), _f(dt)])
    ok = worst <= 1e-5 and worst_tau <= 1e-5
    return ok, f"max error {worst:.3g}, cutoff disagreement {worst_tau:.3g}", "1e-5", \
        ["instance", "error_poly7", "error_exp", "cutoff_difference"], rows


def c15_translation(cfg):
    sp_ = _z1(cfg)
    radii = [cfg.dos_radius // 4, cfg.dos_radius // 2, cfg.dos_radius]
    rep = dos.translation_check(sp_, _potential(cfg), 1, radii, cfg.dos_buffer)
    last = float(rep.residuals[-1])
    return last <= 0.02, f"residual {last:.3g} at R={radii[-1]}", "0.02", ["radius", "residual"], \
        [[_f(r), _f(v)] for r, v in zip(rep.radii, rep.residuals)]


CRITERIA: dict[int, tuple[str, Callable]] = {
    1: ("MOI identities", c01_moi_identities),
    2: ("Gateaux derivative vs finite differences", c02_gateaux),
    3: ("Taylor remainder order", c03_taylor),
    4: ("commutator expansion", c04_delta),
    5: ("oscillating diagonal example", c05_block),
    6: ("Dixmier trace of M_w on Z^2", c06_mw_trace),
    7: ("1D lattice density of states", c07_dos_1d),
    8: ("Dixmier side vs ball average", c08_weighted_trace_vs_ball_average),
    9: ("ball-ratio property", c09_property_c),
    10: ("Widom ratio, circle shift", c10_widom),
    11: ("Szego limit, Toeplitz cosine", c11_szego),
    12: ("Weyl counting in 2D", c12_weyl),
    13: ("Abel vs level functional", c13_abel_level),
    14: ("Helffer-Sjostrand oracle", c14_helffer_sjostrand),
    15: ("translation equivariance", c15_translation),
}
DETERMINISM = 16


def config_hash(cfg: AcceptanceConfig) -> str:
    """Hash of the numeric parameters; the item selection is left out so a
    partial rerun stamps its tables identically."""
    params = {k: v for k, v in cfg.to_dict().items() if k != "items"}
    return hashlib.sha256(json.dumps(params, sort_keys=True, default=list).encode()).hexdigest()[:16]


def _run_one(number: int, cfg: AcceptanceConfig) -> CriterionResult:
    name, fn = CRITERIA[number]
    t0 = time.perf_counter()
    passed, measured, tol, header, rows = fn(cfg)
    return CriterionResult(number, name, bool(passed), measured, tol, header, rows, time.perf_counter() - t0)


def _csv_name(number: int) -> str:
    return f"criterion_{number:02d}.csv"


def csv_hashes(outdir: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(outdir).glob("criterion_*.csv"))}


def run_battery(outdir, cfg: AcceptanceConfig = AcceptanceConfig(), echo: Callable | None = None,
                reference_dir=None) -> list[CriterionResult]:
    """Run the selected criteria, writing ``criterion_NN.csv`` and ``summary.json``.

    Criterion 16 reruns criteria 1-15 into a scratch directory and compares
    CSV hashes with ``reference_dir`` (default: this run's ``outdir``).
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    results = []
    for number in sorted(cfg.items):
        if number == DETERMINISM:
            continue
        res = _run_one(number, cfg)
        write_text_atomic(outdir / _csv_name(number), csv_text(res.header, res.rows, h))
        results.append(res)
        if echo:
            echo(res.line())
    if DETERMINISM in cfg.items:
        t0 = time.perf_counter()
        ref = csv_hashes(reference_dir or outdir)
        with tempfile.TemporaryDirectory() as tmp:
            rerun = AcceptanceConfig(**{**cfg.to_dict(), "items": tuple(sorted(set(cfg.items) - {DETERMINISM}))})
            run_battery(tmp, rerun)
            again = csv_hashes(tmp)
        same = bool(ref) and ref == again
        rows = [[k, ref.get(k, ""), again.get(k, "")] for k in sorted(set(ref) | set(again))]
        res = CriterionResult(DETERMINISM, "determinism of CSV outputs", same,
                              f"{sum(ref.get(k) == again.get(k) for k in ref)}/{len(ref)} CSV hashes identical",
                              "all identical", ["file", "sha256_first", "sha256_second"], rows,
                              time.perf_counter() - t0)
        write_text_atomic(outdir / _csv_name(DETERMINISM), csv_text(res.header, res.rows, h))
        results.append(res)
        if echo:
            echo(res.line())
    summary = {"config_hash": h, "config": cfg.to_dict(),
               "results": [{"number": r.number, "name": r.name, "passed": r.passed, "measured": r.measured,
                            "tolerance": r.tolerance, "runtime_s": round(r.runtime, 3)} for r in results]}
    write_text_atomic(outdir / "summary.json", json.dumps(summary, indent=2, default=list))
    return results
