"""Balanced Monte-Carlo size per input on Ishigami for several design sizes.

Prints the search trace of every (n, input) pair as CSV.  With the default
settings the whole study takes several minutes on one core.

    python3 scripts/balance_study.py --sizes 60 100 150 --inputs 1 3
"""
import argparse
import csv
import sys

from gpsobol import balance_m, fit, optimize_lhs
from gpsobol.functions import ISHIGAMI, ishigami


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[60, 100, 150])
    p.add_argument("--inputs", type=int, nargs="+", default=[1, 3], help="1-based input indices")
    p.add_argument("--m0", type=int, default=100)
    p.add_argument("--m-max", type=int, default=102_400)
    p.add_argument("--n-paths", type=int, default=100)
    p.add_argument("--n-boot", type=int, default=100)
    args = p.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["n", "input", "m", "var_metamodel", "var_mc", "regime", "chosen", "balanced"])
    for n in args.sizes:
        D = optimize_lhs(n, 3, n, 1000)
        model = fit(D, ishigami(ISHIGAMI.to_physical(D)), seed=n)
        for u in args.inputs:
            res = balance_m(model, None, [u - 1], args.m0, 2.0, args.n_paths, args.n_boot,
                            seed=10 * n + u - 1, m_max=args.m_max)
            for m, b in res.trace:
                w.writerow([n, u, m, f"{b.var_metamodel:.3e}", f"{b.var_mc:.3e}", b.regime,
                            int(m == res.m), int(res.balanced)])
            sys.stdout.flush()


if __name__ == "__main__":
    main()
