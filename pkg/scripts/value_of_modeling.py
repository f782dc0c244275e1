"""EVPI and VMS averaged over generated instances small enough to solve exactly.

    python3 scripts/value_of_modeling.py --n 3 4 5 --seeds 10
"""
import argparse

import numpy as np

from covloc.exact import value_of_modeling
from covloc.instance import GeneratorConfig, generate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, nargs="+", default=[3, 4, 5])
    ap.add_argument("--T", type=int, default=3)
    ap.add_argument("--S", type=int, default=3)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args(argv)

    print(f"{'n':>3} {'SP':>10} {'WS':>10} {'EVPI':>9} {'1PS':>10} {'VMS':>9}")
    for n in args.n:
        vals = [value_of_modeling(generate(GeneratorConfig(n=n, T=args.T, S=args.S, seed=s)))
                for s in range(args.seeds)]
        mean = {k: np.mean([getattr(v, k) for v in vals]) for k in ("sp", "ws", "evpi", "one_ps", "vms")}
        print(f"{n:>3} {mean['sp']:10.2f} {mean['ws']:10.2f} {mean['evpi']:9.2f} "
              f"{mean['one_ps']:10.2f} {mean['vms']:9.2f}")


if __name__ == "__main__":
    main()
