"""Run both Jobs II analyses and print estimates next to the reference values.

Example::

    python scripts/jobs_table.py --seed 0
"""

import argparse
from pathlib import Path

from mediator.cli import parse_config, run

ROOT = Path(__file__).resolve().parents[1]

# reference estimates and 95% intervals for the two analyses
REFERENCE = {
    "jobs_binary": {
        "P1": (-0.022, (-0.055, 0.012)), "P2": (-0.017, (-0.04, 0.005)), "P3": (-0.002, (-0.014, 0.009)),
        "P4": (-0.014, (-0.029, 0.002)), "R": (0.008, (-0.024, 0.039)),
        "RIDE": (-0.022, (-0.026, -0.018)), "RIIE": (-0.016, (-0.06, 0.028)),
    },
    "jobs_mtp": {
        "P1": (0.013, (0.003, 0.023)), "P2": (0.007, (0.003, 0.012)), "P3": (0.011, (0.009, 0.013)),
        "P4": (0.021, (0.013, 0.029)), "R": (-0.003, (-0.007, 0.002)),
        "RIDE": (0.027, (0.011, 0.043)), "RIIE": (0.018, (0.012, 0.024)),
    },
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    args = p.parse_args()
    for name, ref in REFERENCE.items():
        rep, _ = run(parse_config(ROOT / "configs" / f"{name}.toml", seed=args.seed, crossfit_folds=args.folds))
        print(f"[{name}]")
        print(f"{'effect':<6}{'estimate':>10}{'95% CI':>20}{'reference':>11}{'ref CI':>18}")
        for k, (v, (lo, hi)) in ref.items():
            r = rep.row(k)
            ci = f"({r.ci_lower:.3f}, {r.ci_upper:.3f})"
            print(f"{k:<6}{r.estimate:>10.3f}{ci:>20}{v:>11.3f}{f'({lo}, {hi})':>18}")
        if rep.falsification:
            print(f"falsification p = {rep.falsification['p_value']:.3f}")
        print()


if __name__ == "__main__":
    main()
