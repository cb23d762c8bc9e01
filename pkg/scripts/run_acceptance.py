"""Run the acceptance battery and write per-criterion CSVs plus summary.json."""
import argparse
import sys

from spectral_lab.acceptance import AcceptanceConfig, run_battery


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/acceptance")
    ap.add_argument("--only", type=int, nargs="*", help="criterion numbers (default: all)")
    ap.add_argument("--seed", type=int, default=AcceptanceConfig.seed)
    args = ap.parse_args()
    items = tuple(args.only) if args.only else tuple(range(1, 17))
    results = run_battery(args.out, AcceptanceConfig(seed=args.seed, items=items), echo=print)
    print(f"{sum(r.passed for r in results)}/{len(results)} passed")
    return 0 if all(r.passed for r in results) else 5


if __name__ == "__main__":
    sys.exit(main())
