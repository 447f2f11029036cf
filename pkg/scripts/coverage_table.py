"""Raw and inflated band coverage for several sample sizes and both methods.

    python3 scripts/coverage_table.py --n 50 100 --replications 100
"""

import argparse
import json

from monoqr.bands import CoverageSettings, coverage_experiment
from monoqr.simgen import Study1


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[50, 100, 500])
    p.add_argument("--methods", nargs="+", default=["hb", "eb"])
    p.add_argument("--x", type=float, nargs="+", default=[0.2, 0.5, 0.7])
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.add_argument("--output")
    args = p.parse_args()
    table = []
    for n in args.n:
        for method in args.methods:
            rep = coverage_experiment(Study1(), n, args.replications, method, xs=args.x,
                                      settings=CoverageSettings(), seed=args.seed, workers=args.workers)
            for x, cell in rep["x"].items():
                row = {"n": n, "method": method, "x": float(x),
                       **{k: v for k, v in cell.items() if not k.startswith("covered")}}
                table.append(row)
                print(json.dumps(row), flush=True)
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(table, fh, indent=2)


if __name__ == "__main__":
    main()
