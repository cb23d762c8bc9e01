"""Cesaro, logarithmic and symbol means of the oscillating block sequence."""
import argparse

from spectral_lab.divdiff import parse_symbol
from spectral_lab.dos import diagonal_example
from spectral_lab.io import svg_line_plot, write_text_atomic
from spectral_lab.summation import series_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=2**21)
    ap.add_argument("--f", default="bump:0.5,0.9,1.1,1.5")
    ap.add_argument("--out", default="out/block_sequence")
    args = ap.parse_args()

    ex = diagonal_example(args.n_max, parse_symbol(args.f))
    for m, v in ex.cesaro_even.items():
        print(f"C at 2^{2 * m}: {v:.5f}")
    for m, v in ex.cesaro_odd.items():
        print(f"C at 2^{2 * m + 1}: {v:.5f}")
    cps = ex.diagnostics.checkpoints
    print(f"log-mean of f(lambda) at {cps[-1]}: {ex.symbol_log_mean[cps[-1]]:.5f}")
    for name, v in ex.diagnostics.verdicts.items():
        print(f"{name}: {v.label()}")
    write_text_atomic(f"{args.out}/series.csv", series_csv(ex.diagnostics))
    write_text_atomic(f"{args.out}/means.svg", svg_line_plot(
        {k: (cps, ex.diagnostics.transforms[k][cps]) for k in ex.diagnostics.transforms},
        "means at dyadic checkpoints", "n", "value", logx=True))


if __name__ == "__main__":
    main()
