"""Coverage of the 95% index intervals over independent random designs.

Each repetition draws a random LHS, fits kriging on Ishigami and checks
whether the full and the metamodel-only intervals contain the exact index.

    python3 scripts/coverage_study.py --reps 50 --n 100 --input 1
"""
import argparse

from gpsobol import algorithm1, fit, lhs, quantiles
from gpsobol.functions import ISHIGAMI, ishigami, ishigami_indices


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--input", type=int, default=1, help="1-based input index")
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--n-paths", type=int, default=100)
    p.add_argument("--n-boot", type=int, default=100)
    args = p.parse_args()

    exact = ishigami_indices()[args.input - 1]
    full = meta = 0
    print("rep,full_lo,full_hi,meta_lo,meta_hi")
    for r in range(args.reps):
        D = lhs(args.n, 3, 1000 + r)
        model = fit(D, ishigami(ISHIGAMI.to_physical(D)), seed=r)
        s = algorithm1(model, None, [args.input - 1], args.m, args.n_paths, args.n_boot, seed=r)
        f = quantiles(s, [0.025, 0.975], "full")
        g = quantiles(s, [0.025, 0.975], "metamodel")
        full += f[0] <= exact <= f[1]
        meta += g[0] <= exact <= g[1]
        print(f"{r},{f[0]:.4f},{f[1]:.4f},{g[0]:.4f},{g[1]:.4f}", flush=True)
    print(f"# coverage full {full}/{args.reps}, metamodel-only {meta}/{args.reps}")


if __name__ == "__main__":
    main()
