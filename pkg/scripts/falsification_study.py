"""Rejection rate of the Wald test of R = 0 over simulated replications.

Example::

    python scripts/falsification_study.py --scm configs/scm/null_az.toml --reps 200
"""

import argparse

import numpy as np

from mediator import EnsembleSpec, RieszFunctionClass, SCMSpec, augment_zpi, estimate_effects, make_folds, simulate, truth_table


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scm", required=True)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--copies", type=int, default=10)
    args = p.parse_args()

    scm = SCMSpec.load(args.scm)
    tt = truth_table(scm, "RT", draws=1_000_000, seed=103)
    print(f"oracle R = {tt['R']:.5f} (MC se {tt.se['R']:.5f})")
    ens = EnsembleSpec.from_names([{"name": "linear", "degree": 2}, {"name": "ridge", "degree": 2, "lambda": 0.01}])
    rejected, zs = [], []
    for r in range(args.reps):
        d = simulate(scm, args.n, seed=20_000 + r)
        aug = make_folds(augment_zpi(d, seed=r, copies=args.copies), 5, seed=r)
        f = estimate_effects(aug, ["RT"], None, ens, RieszFunctionClass(degree=2), seed=r).falsification
        rejected.append(f.p_value < args.level)
        zs.append(f.statistic)
    zs = np.array(zs)
    print(f"rejection rate {np.mean(rejected):.3f} over {args.reps} replications at level {args.level}")
    print(f"z statistics: mean {zs.mean():+.3f}, sd {zs.std(ddof=1):.3f}")


if __name__ == "__main__":
    main()
