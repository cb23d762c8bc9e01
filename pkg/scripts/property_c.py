"""Ball-volume ratios on lattices, the binary tree and percolation clusters."""
import argparse
import math

from spectral_lab.spaces import ball_table, binary_tree, graph_space, lattice_space, percolation_cluster, \
    property_c_diagnostic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radius", type=int, default=150)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    ap.add_argument("--p-open", type=float, default=0.7)
    args = ap.parse_args()

    cases = {f"Z^2 p={p}": lattice_space(2, p, args.radius) for p in (1, 2, 3, math.inf)}
    cases["Z^3 p=1"] = lattice_space(3, 1, 40)
    cases["binary tree"] = graph_space(binary_tree(16))
    for s in args.seeds:
        cases[f"bond percolation seed {s}"] = percolation_cluster(2, args.p_open, "bond", s, args.radius)
    for name, space in cases.items():
        table = ball_table(space)
        window = min(20, len(table) // 3)
        rep = property_c_diagnostic(table, window=window)
        print(f"{name:28s} radii {len(table):6d}  tail ratio {rep.tail_ratio:.4f}  {rep.verdict}")


if __name__ == "__main__":
    main()
