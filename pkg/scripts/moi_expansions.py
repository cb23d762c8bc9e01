"""Taylor and commutator-expansion remainders of exp(H + tV) on random matrices."""
import argparse

import numpy as np

from spectral_lab.divdiff import exp_symbol, heat_symbol
from spectral_lab.moi import delta_expansion, heat_trace_expansion, loglog_slope, taylor_remainder
from spectral_lab.operators import op_norm, random_hermitian


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--order", type=int, default=2)
    args = ap.parse_args()
    rng = np.random.Generator(np.random.Philox(key=args.seed))
    h, v = random_hermitian(rng, args.dim), random_hermitian(rng, args.dim)
    f = exp_symbol()

    rep = taylor_remainder(f, h, v, args.order)
    print(f"Taylor N={args.order}: slope {rep.slope:.3f}")

    hs = 0.025 * h
    ts = np.array([1e-1, 3e-2, 1e-2, 3e-3])
    errs = [op_norm(f.on_matrix(hs + t * v) - delta_expansion(f, hs, t * v, args.order, args.order + 1)) for t in ts]
    print("commutator expansion errors:", " ".join(f"{e:.2e}" for e in errs), f"slope {loglog_slope(ts, errs):.3f}")

    heat = heat_trace_expansion(heat_symbol(1.0), h, v, N=args.order)
    print(f"heat trace residual slope {heat.slope:.3f}")


if __name__ == "__main__":
    main()
