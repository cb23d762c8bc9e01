"""Command-line experiment runner.

Verbs: ``moi verify``, ``sum diagnose``, ``spaces analyze``, ``dos run``,
``qe run``, ``szego run``, ``weyl count`` and ``acceptance``.

Exit codes: 0 pass, 2 configuration error, 3 budget exceeded, 4 I/O error,
5 failed verification.  ``SPECTRAL_LAB_THREADS`` caps BLAS threads when set
before numpy is first imported.
"""
from __future__ import annotations

import os

_threads = os.environ.get("SPECTRAL_LAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import sys  # noqa: E402
from dataclasses import asdict, dataclass, field  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .errors import BudgetExceeded, ConfigError, SpectralLabError  # noqa: E402
from .io import csv_text, stamp_csv, svg_line_plot, write_text_atomic  # noqa: E402

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO, EXIT_FAIL = 0, 2, 3, 4, 5
STOCHASTIC = {("moi", "verify"), ("dos", "run"), ("spaces", "analyze")}


@dataclass
class ExperimentConfig:
    """Verb, parameters and output location of one experiment.

    ``config_hash`` covers everything except the output directory, so the
    same experiment written to two places yields identical files.
    """

    verb: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    output: str = "out"
    deterministic: bool = False
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            obj = json.loads(text)
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @property
    def config_hash(self) -> str:
        obj = asdict(self)
        obj.pop("output")
        return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self):
        if tuple(self.verb.split()) in STOCHASTIC and self.seed is None:
            raise ConfigError(f"'{self.verb}' is stochastic and needs an explicit seed")


class Runner:
    def __init__(self, cfg: ExperimentConfig, svg: bool = False):
        self.cfg = cfg
        self.out = Path(cfg.output)
        self.svg = svg
        self.h = cfg.config_hash

    def csv(self, name: str, header, rows):
        write_text_atomic(self.out / name, csv_text(header, rows, self.h))

    def raw_csv(self, name: str, text: str):
        write_text_atomic(self.out / name, stamp_csv(text, self.h))

    def plot(self, name: str, series: dict, **kw):
        if self.svg:
            kw["title"] = f"{kw.get('title', '')} [{self.h}]"
            write_text_atomic(self.out / name, svg_line_plot(series, **kw))

    def stamp(self):
        write_text_atomic(self.out / "config.json", self.cfg.to_json() + "\n")


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _fourier(text: str) -> dict:
    out = {}
    for item in str(text).split(","):
        k, _, v = item.partition(":")
        out[int(k)] = complex(v)
    return out


# -- verbs -----------------------------------------------------------------------

def run_moi_verify(r: Runner) -> bool:
    from .divdiff import parse_symbol
    from .moi import identity_residuals
    from .operators import random_hermitian

    p = r.cfg.params
    f = parse_symbol(p.get("f", "exp"))
    rng = np.random.Generator(np.random.Philox(key=r.cfg.seed))
    rows, worst = [], 0.0
    for t in range(int(p.get("trials", 100))):
        a = random_hermitian(rng, int(p.get("dim", 6)))
        b = random_hermitian(rng, int(p.get("dim", 6)))
        res = identity_residuals(f, a, b)
        worst = max(worst, res.commutator_residual / res.scale, res.perturbation_residual / res.scale)
        rows.append([t, repr(res.commutator_residual), repr(res.perturbation_residual), repr(res.scale), int(res.passed)])
    r.csv("moi_residuals.csv", ["trial", "commutator_residual", "perturbation_residual", "scale", "pass"], rows)
    ok = worst <= 1.0
    print(f"moi verify {f.name}: max residual/scale {worst:.3g}; max residual <= 1e-9 scale: {'PASS' if ok else 'FAIL'}")
    return ok


def run_sum_diagnose(r: Runner) -> bool:
    from .dos import block_sequence
    from .summation import diagnose, read_series_csv, series_csv

    p = r.cfg.params
    if p.get("input"):
        raw = read_series_csv(p["input"])
    elif p.get("example") == "block":
        raw = block_sequence(int(p.get("n_max", 2**20)))
    else:
        raise ConfigError("sum diagnose needs --input FILE or --example block")
    diag = diagnose(raw, window=int(p.get("window", 4)), tol=float(p.get("tol", 0.05)))
    r.raw_csv("series.csv", series_csv(diag))
    cps = diag.checkpoints
    r.plot("series.svg", {k: (cps, diag.transforms[k][cps]) for k in diag.transforms},
           title="transforms at dyadic checkpoints", xlabel="n", ylabel="value", logx=True)
    for name, v in diag.verdicts.items():
        print(f"{name}: {v.label()}")
    return True


def run_spaces_analyze(r: Runner) -> bool:
    from . import spaces

    p = r.cfg.params
    kind = p.get("kind", "lattice")
    if kind == "lattice":
        sp_ = spaces.lattice_space(int(p.get("d", 2)), float(p.get("p", 2)), float(p.get("r_max", 60)))
    elif kind == "graph":
        g = str(p.get("graph", "tree:12"))
        name, _, arg = g.partition(":")
        if name == "tree":
            sp_ = spaces.graph_space(spaces.binary_tree(int(arg)))
        elif name == "path":
            sp_ = spaces.graph_space(spaces.path_graph(int(arg)))
        elif name == "grid":
            adj, coords, o = spaces.grid_graph(2, int(arg))
            sp_ = spaces.graph_space(adj, o, coords=coords, exact_radius=int(arg))
        else:
            raise ConfigError(f"unknown graph {g!r}")
    elif kind == "percolation":
        sp_ = spaces.percolation_cluster(int(p.get("d", 2)), float(p.get("p_open", 0.7)), p.get("mode", "bond"),
                                         int(r.cfg.seed), int(p.get("r_max", 200)))
    else:
        raise ConfigError(f"unknown space kind {kind!r}")
    table = spaces.ball_table(sp_)
    rep = spaces.property_c_diagnostic(table, window=int(p.get("window", 20)), tol=float(p.get("tol", 0.05)),
                                       exact_radius=sp_.exact_radius)
    r.raw_csv("ball_table.csv", spaces.ball_table_csv(table))
    write_text_atomic(r.out / "space.json", json.dumps({**json.loads(spaces.space_snapshot(sp_)),
                                                        "config_hash": r.h}, sort_keys=True) + "\n")
    r.plot("ratios.svg", {"ratio": (np.arange(rep.ratios.size), rep.ratios)}, title="ball ratios",
           xlabel="k", ylabel="|B(r_k+1)|/|B(r_k)|")
    print(f"spaces {kind}: {len(table)} radii, tail ratio {rep.tail_ratio:.4f}, verdict {rep.verdict} "
          f"(empirical, window radius {sp_.exact_radius:g})")
    return True


def _potential(spec: str, seed, extent: int, d: int):
    from .dos import RandomPotential

    name, _, arg = str(spec).partition(":")
    if name == "const":
        return float(arg or 0.0)
    if name == "random":
        parts = arg.split(":") if arg else []
        s = int(parts[0]) if parts and parts[0] else int(seed)
        amp = float(parts[1]) if len(parts) > 1 else 0.5
        return RandomPotential(s, amp, extent, d)
    if name == "file":
        return np.loadtxt(arg, delimiter=",", ndmin=1)
    raise ConfigError(f"unknown potential {spec!r}")


def run_dos(r: Runner) -> bool:
    from . import dos, spaces
    from .divdiff import parse_symbol

    p = r.cfg.params
    space = str(p.get("space", "lattice:1"))
    name, _, arg = space.partition(":")
    if name != "lattice":
        raise ConfigError("dos run supports lattice:d spaces")
    d = int(arg or 1)
    radii = [int(v) for v in _floats(p.get("radii", "500,1000,2000"))]
    buffer = int(p.get("buffer", 50))
    sp_ = spaces.lattice_space(d, float(p.get("p", 2 if d == 1 else np.inf)), max(radii) + buffer)
    pot = _potential(p.get("potential", "const:0"), r.cfg.seed, max(radii) + buffer + 2, d)
    if isinstance(pot, np.ndarray) and pot.size != sp_.size:
        raise ConfigError(f"potential file has {pot.size} values, window has {sp_.size} points")
    kind = p.get("kind", "adjacency")
    series = dos.dos_ball_average(sp_, radii, buffer, kind, pot if not isinstance(pot, np.ndarray) else 0.0)
    curves = {f"idos_R{R}": c for R, c in zip(radii, series.curves)}
    free = kind == "adjacency" and not callable(pot) and not isinstance(pot, np.ndarray) and pot == 0.0
    if free and d == 1:
        curves["reference"] = dos.arcsine_idos(series.energies)
    r.raw_csv("idos.csv", dos.idos_csv(series.energies, curves))
    r.plot("idos.svg", {k: (series.energies, v) for k, v in curves.items()}, title="integrated density of states",
           xlabel="E", ylabel="N(E)")
    msg = [f"dos run: Cauchy differences {', '.join(f'{c:.3g}' for c in series.cauchy)}"]
    if "reference" in curves:
        msg.append(f"sup-error vs arcsine law {np.max(np.abs(series.curves[-1] - curves['reference'])):.3g}")
    f = parse_symbol(p.get("f", "bump:-1,-0.5,0.5,1"))
    avg = series.estimates[-1].average(f)
    rows = [["ball_average", repr(avg), ""]]
    h = dos.hamiltonian(sp_, kind, pot, radii[-1], buffer)
    if h.dim <= int(p.get("dixmier_max_dim", 6000)):
        side = dos.dixmier_side(h, f, ball_average=avg)
        rows.append(["dixmier_side", repr(side.estimate), side.verdict.label()])
        msg.append(f"ball average {avg:.4f} vs Dixmier side {side.estimate:.4f} [{side.verdict.label()}]")
    else:
        msg.append(f"ball average {avg:.4f}; Dixmier side skipped (dimension {h.dim})")
    r.csv("comparison.csv", ["quantity", "value", "verdict"], rows)
    print("; ".join(msg))
    return True


def _triple_and_observable(p: dict):
    from . import trunc

    model = dict(p.get("model") or {})
    kind = model.get("kind", p.get("kind", "circle"))
    K = int(model.get("K", p.get("K", 64)))
    t = trunc.build_triple(kind, K, int(model.get("d", 2)), model.get("theta", p.get("theta")))
    if kind == "nctorus":
        coeffs = {tuple(int(c) for c in k.split(",")): complex(v)
                  for k, v in (model.get("coeffs") or {"0,0": 1.0}).items()}
        return t, trunc.torus_element(t, coeffs), coeffs
    fc = model.get("fourier") or p.get("fourier") or "0:1"
    coeffs = {int(k): complex(v) for k, v in fc.items()} if isinstance(fc, dict) else _fourier(fc)
    return t, trunc.fourier_operator(t, coeffs), coeffs


def run_qe(r: Runner) -> bool:
    from . import trunc

    t, a, coeffs = _triple_and_observable(r.cfg.params)
    rep = trunc.truncation_functional(t, a)
    means = trunc.matrix_element_means(t, a)
    ref = coeffs.get(0, coeffs.get(tuple([0] * t.d), 0.0))
    r.raw_csv("truncation.csv", trunc.report_csv(trunc.TruncationReport(rep.lambdas, rep.trace_p, rep.values,
                                                                        float(np.real(ref)))))
    r.plot("truncation.svg", {"Tr(PaP)/Tr(P)": (rep.lambdas, np.real(rep.values))}, title="truncation functional",
           xlabel="lambda", ylabel="value")
    lm = means.diagnostics.verdicts["logmean"]
    print(f"qe run {t.kind}(K={t.K}): truncation functional {float(np.real(rep.values[-1])):.6g} "
          f"(mean coefficient {np.real(ref):.6g}); log-mean {lm.label()}; boundary gap {means.boundary_gap:.2e}")
    return True


def run_szego(r: Runner) -> bool:
    from . import trunc

    p = r.cfg.params
    t, a, coeffs = _triple_and_observable(p)
    power = int(p.get("power", 2))
    rep = trunc.szego_functional(t, a.toarray(), lambda x: x**power)
    wid = trunc.widom_defect(t, a, power)
    r.raw_csv("szego.csv", trunc.report_csv(rep))
    r.plot("szego.svg", {"Tr f(PAP)/Tr P": (rep.lambdas, rep.values)}, title="Szego functional",
           xlabel="lambda", ylabel="value")
    print(f"szego run {t.kind}(K={t.K}), f=x^{power}: value {rep.values[-1]:.6g}; "
          f"Widom defect exponent {wid.decay_exponent if wid.decay_exponent is not None else float('nan'):.3g}")
    return True


def run_weyl(r: Runner) -> bool:
    from .trunc import weyl_counting

    p = r.cfg.params
    tab = weyl_counting(int(p.get("d", 2)), float(p.get("lam_max", 1e4)))
    r.csv("weyl.csv", ["lambda", "count"], [[repr(float(l)), int(c)] for l, c in zip(tab.levels, tab.counts)])
    r.plot("weyl.svg", {"N(lambda)": (tab.levels[1:], tab.counts[1:])}, title="lattice point count",
           xlabel="lambda", ylabel="N", logx=True, logy=True)
    lam = float(p.get("lam_max", 1e4))
    print(f"weyl count d={tab.d}: N({lam:g}) = {int(tab.count(lam))}, N/lambda^(d/2) = "
          f"{tab.count(lam) / lam ** (tab.d / 2):.5f} (unit-ball volume {tab.unit_ball_volume:.5f}), "
          f"fitted exponent {tab.exponent:.4f}")
    return True


def run_acceptance(r: Runner) -> bool:
    from .acceptance import AcceptanceConfig, run_battery

    p = r.cfg.params
    items = tuple(int(v) for v in _floats(p["only"])) if p.get("only") else tuple(range(1, 17))
    if p.get("only") == "":
        items = ()
    kw = {"items": items}
    if r.cfg.seed is not None:
        kw["seed"] = int(r.cfg.seed)
    if not items:
        print("acceptance: empty suite, nothing to run (warning)")
        return True
    results = run_battery(r.out, AcceptanceConfig(**kw), echo=print)
    ok = all(res.passed for res in results)
    print(f"acceptance: {sum(res.passed for res in results)}/{len(results)} criteria passed")
    return ok


VERBS = {
    "moi verify": run_moi_verify,
    "sum diagnose": run_sum_diagnose,
    "spaces analyze": run_spaces_analyze,
    "dos run": run_dos,
    "qe run": run_qe,
    "szego run": run_szego,
    "weyl count": run_weyl,
    "acceptance": run_acceptance,
}


# -- argument parsing -----------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON experiment config (inline flags override its params)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true", help="ordered reductions, recorded in the stamp")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectral-lab", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("moi").add_subparsers(dest="action", required=True)
    p = g.add_parser("verify")
    _common(p)
    p.add_argument("--dim", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--f")

    g = sub.add_parser("sum").add_subparsers(dest="action", required=True)
    p = g.add_parser("diagnose")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--example", choices=["block"])
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--window", type=int)

    g = sub.add_parser("spaces").add_subparsers(dest="action", required=True)
    p = g.add_parser("analyze")
    _common(p)
    p.add_argument("--kind", choices=["lattice", "graph", "percolation"])
    p.add_argument("--d", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--graph")
    p.add_argument("--p-open", dest="p_open", type=float)
    p.add_argument("--mode", choices=["bond", "site"])
    p.add_argument("--window", type=int)
    p.add_argument("--tol", type=float)

    g = sub.add_parser("dos").add_subparsers(dest="action", required=True)
    p = g.add_parser("run")
    _common(p)
    p.add_argument("--space")
    p.add_argument("--kind", choices=["adjacency", "graph-laplacian", "diagonal"])
    p.add_argument("--potential")
    p.add_argument("--radii")
    p.add_argument("--buffer", type=int)
    p.add_argument("--f")

    for group, action in (("qe", "run"), ("szego", "run")):
        g = sub.add_parser(group).add_subparsers(dest="action", required=True)
        p = g.add_parser(action)
        _common(p)
        p.add_argument("--model", help="JSON model spec (file path or inline JSON)")
        p.add_argument("--kind", choices=["circle", "toeplitz", "nctorus"])
        p.add_argument("--K", type=int)
        p.add_argument("--fourier", help="comma list k:c, e.g. '1:0.5,-1:0.5'")
        if group == "szego":
            p.add_argument("--power", type=int)

    g = sub.add_parser("weyl").add_subparsers(dest="action", required=True)
    p = g.add_parser("count")
    _common(p)
    p.add_argument("--d", type=int)
    p.add_argument("--lam-max", dest="lam_max", type=float)

    p = sub.add_parser("acceptance")
    _common(p)
    p.add_argument("--only", help="comma list of criterion numbers (empty string: empty suite)")
    return ap


_SKIP = {"group", "action", "config", "out", "seed", "deterministic", "svg"}


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    verb = ns.group if ns.group == "acceptance" else f"{ns.group} {ns.action}"
    if ns.config:
        try:
            cfg = ExperimentConfig.from_json(Path(ns.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if cfg.verb != verb:
            raise ConfigError(f"config verb {cfg.verb!r} does not match command {verb!r}")
    else:
        cfg = ExperimentConfig(verb, output=f"out/{verb.replace(' ', '_')}")
    params = dict(cfg.params)
    for k, v in vars(ns).items():
        if k not in _SKIP and v is not None:
            params[k] = v
    if isinstance(params.get("model"), str):
        text = params["model"]
        try:
            params["model"] = json.loads(Path(text).read_text() if Path(text).exists() else text)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"invalid model spec: {exc}") from exc
    cfg.params = params
    if ns.seed is not None:
        cfg.seed = ns.seed
    elif cfg.seed is None and tuple(verb.split()) in STOCHASTIC:
        cfg.seed = 0
    if ns.out:
        cfg.output = ns.out
    cfg.deterministic = cfg.deterministic or ns.deterministic
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        cfg.validate()
        runner = Runner(cfg, svg=ns.svg)
        runner.stamp()
        ok = VERBS[cfg.verb](runner)
        return EXIT_OK if ok else EXIT_FAIL
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, SpectralLabError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
