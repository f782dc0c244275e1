"""Mean gaps of the eight heuristic variants on generated instances.

    python3 scripts/gap_table.py --n 5 10 --seeds 5 --out gaps.csv
"""
import argparse
import csv
import sys
from collections import defaultdict

import numpy as np

from covloc.exact import BudgetExceeded, solve_exact
from covloc.instance import GeneratorConfig, generate
from covloc.lagrangian import VARIANTS, HeuristicConfig, report_row, run_heuristic
from covloc.lp import solve_lp
from covloc.model import build_lb0, build_lp_relaxation

COLUMNS = ("gap_lb_ub", "gap_lp_lb", "gap_ub_opt", "iters", "secs")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, nargs="+", default=[5])
    ap.add_argument("--T", type=int, default=3)
    ap.add_argument("--S", type=int, default=3)
    ap.add_argument("--seeds", type=int, default=5, help="seeds 42, 43, ... per size")
    ap.add_argument("--variants", default=",".join(VARIANTS))
    ap.add_argument("--budget", type=int, default=10**6, help="exact solver budget (0 skips OPT)")
    ap.add_argument("--out", help="per-run CSV")
    args = ap.parse_args(argv)

    rows = []
    for n in args.n:
        for seed in range(42, 42 + args.seeds):
            inst = generate(GeneratorConfig(n=n, T=args.T, S=args.S, seed=seed))
            lp = solve_lp(build_lp_relaxation(inst)).objective
            lb0 = solve_lp(build_lb0(inst)).objective
            try:
                opt = solve_exact(inst, args.budget).opt if args.budget else None
            except BudgetExceeded:
                opt = None
            for label in args.variants.split(","):
                rep = run_heuristic(inst, HeuristicConfig.variant(label))
                rows.append(report_row(inst, rep, lb0, lp, opt))
            print(f"n={n} seed={seed} done", file=sys.stderr)

    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)

    groups = defaultdict(list)
    for row in rows:
        groups[(row["n"], row["variant"])].append(row)
    print(f"{'n':>4} {'variant':>7} " + " ".join(f"{c:>10}" for c in COLUMNS))
    for (n, variant), grp in sorted(groups.items()):
        means = []
        for c in COLUMNS:
            vals = [float(r[c]) for r in grp if r[c] not in ("", None)]
            means.append(f"{np.mean(vals):10.3f}" if vals else f"{'-':>10}")
        print(f"{n:>4} {variant:>7} " + " ".join(means))


if __name__ == "__main__":
    main()
