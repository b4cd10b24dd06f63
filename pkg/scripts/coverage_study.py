"""Bias, standard-error calibration and 95% CI coverage over simulated replications.

Example::

    python scripts/coverage_study.py --scm configs/scm/confounded.toml --reps 200 --families RT RI
"""

import argparse
import json
import time

import numpy as np

from mediator import EnsembleSpec, RieszFunctionClass, SCMSpec, augment_zpi, estimate_effects, make_folds, simulate, truth_table


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scm", required=True)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--families", nargs="+", default=["RT", "RI"])
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--copies", type=int, default=10, help="permuted Z copies")
    p.add_argument("--degree", type=int, default=2, help="Riesz basis degree")
    p.add_argument("--draws", type=int, default=1_000_000, help="oracle Monte Carlo draws")
    p.add_argument("--out", help="write per-replication results as JSON")
    args = p.parse_args()

    scm = SCMSpec.load(args.scm)
    truth = {}
    for fam in args.families:
        truth.update(truth_table(scm, fam, draws=args.draws, seed=101).values)
    ens = EnsembleSpec.from_names([{"name": "linear", "degree": 2}, {"name": "ridge", "degree": 2, "lambda": 0.01}])
    cls = RieszFunctionClass(degree=args.degree)
    rows = []
    t0 = time.time()
    for r in range(args.reps):
        d = simulate(scm, args.n, seed=10_000 + r)
        aug = make_folds(augment_zpi(d, seed=r, copies=args.copies), args.folds, seed=r)
        est = estimate_effects(aug, args.families, None, ens, cls, seed=r)
        for fam in args.families:
            for name, e in est.effects[fam].items():
                rows.append({"rep": r, "family": fam, "name": name, "estimate": e.estimate, "se": e.se,
                             "covered": bool(e.ci[0] <= truth[name] <= e.ci[1])})
    print(f"{args.reps} replications in {(time.time() - t0) / 60:.1f} min")
    print(f"{'effect':<8}{'truth':>9}{'bias':>9}{'sd':>8}{'mean SE':>9}{'SE/sd':>7}{'cover':>7}")
    for name in dict.fromkeys(r["name"] for r in rows):
        sel = [r for r in rows if r["name"] == name]
        x = np.array([r["estimate"] for r in sel])
        se = np.array([r["se"] for r in sel])
        cov = np.mean([r["covered"] for r in sel])
        sd = x.std(ddof=1)
        print(f"{name:<8}{truth[name]:>9.4f}{x.mean() - truth[name]:>+9.4f}{sd:>8.4f}{se.mean():>9.4f}"
              f"{se.mean() / sd:>7.2f}{cov:>7.3f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"truth": truth, "rows": rows}, fh, indent=1)


if __name__ == "__main__":
    main()
