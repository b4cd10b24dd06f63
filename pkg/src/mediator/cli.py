"""Command-line interface: ``mediator run | simulate | truth``.

Exit codes: 0 on success, 2 on invalid input or configuration, 3 when the
numerical machinery fails.  Warnings go to stderr, reports to stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from . import engine
from .dataset import VariableRoles, augment_zpi, load_csv, make_folds, write_csv
from .errors import CrossWorldWarning, FamilyRoleMismatch, InvalidFoldCount, NumericalError, ValidationError
from .estimands import EFFECT_FAMILIES, families_from
from .learners import EnsembleSpec
from .oracle import TWINS, SCMSpec, simulate, truth_counterfactual, truth_table
from .policies import Policy
from .report import EffectReport, build_report, write_report
from .riesz import RieszFunctionClass

DEFAULT_LEARNERS = ("mean", "linear", {"name": "ridge", "lambda": 1.0})


@dataclass(frozen=True)
class RunConfig:
    data: str
    roles: VariableRoles
    effects: tuple[str, ...] = ("RT",)
    d0: Policy | None = None
    d1: Policy | None = None
    learners: tuple = DEFAULT_LEARNERS
    stacking: str = "convex"
    cv_folds: int = 5
    riesz: RieszFunctionClass = field(default_factory=RieszFunctionClass)
    crossfit_folds: int = 5
    epochs: int = 20
    seed: int = 0
    out: str | None = None
    format: str = "table"
    allow_cross_world: bool = False
    zpi_strategy: str = "treatment"
    zpi_copies: int = 10

    def __post_init__(self):
        object.__setattr__(self, "effects", tuple(families_from(self.effects)))
        if self.crossfit_folds < 1:
            raise InvalidFoldCount(f"crossfit_folds must be >= 1, got {self.crossfit_folds}")
        if self.zpi_copies < 1:
            raise ValidationError(f"zpi_copies must be >= 1, got {self.zpi_copies}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.format not in ("json", "table"):
            raise ValidationError(f"unknown format {self.format!r}")
        if (self.d0 is None) != (self.d1 is None):
            raise ValidationError("give both d0 and d1 or neither")
        if "N" in self.effects and self.roles.has_moc and not self.allow_cross_world:
            raise FamilyRoleMismatch(
                "NDE/NIE are not identified when an intermediate confounder (moc) is configured; "
                "use RI or RT, or pass --allow-cross-world"
            )
        if "RT" in self.effects and not self.roles.has_moc:
            raise FamilyRoleMismatch("effect RT needs an intermediate confounder (moc)")
        # keep the Riesz epoch count in sync with the top-level setting
        if self.riesz.epochs != self.epochs:
            object.__setattr__(self, "riesz", replace(self.riesz, epochs=self.epochs))

    @property
    def policies(self):
        return None if self.d0 is None else (self.d0, self.d1)

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "roles": self.roles.to_dict(),
            "effect": list(self.effects),
            "d0": None if self.d0 is None else self.d0.to_dict(),
            "d1": None if self.d1 is None else self.d1.to_dict(),
            "learners": {"candidates": [c if isinstance(c, str) else dict(c) for c in self.learners],
                         "stacking": self.stacking, "cv_folds": self.cv_folds},
            "riesz": self.riesz.to_dict(),
            "crossfit_folds": self.crossfit_folds,
            "epochs": self.epochs,
            "seed": self.seed,
            "allow_cross_world": self.allow_cross_world,
            "zpi_strategy": self.zpi_strategy,
            "zpi_copies": self.zpi_copies,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _roles(d) -> VariableRoles:
    d = dict(d)
    try:
        return VariableRoles(
            covariates=tuple(d.get("covar", d.get("covariates", ()))),
            treatment=d.get("trt", d.get("treatment")),
            moc=tuple(d.get("moc") or ()),
            mediators=tuple(d.get("mediators", ())),
            outcome=d["outcome"],
            id=d.get("id"),
        )
    except KeyError as e:
        raise ValidationError(f"roles missing {e.args[0]!r}") from None


def config_from_dict(d: dict, base_dir: Path | None = None, **overrides) -> RunConfig:
    """Resolve a config mapping; ``overrides`` that are not None win over file values."""
    d = dict(d)
    if "data" not in d or "roles" not in d:
        raise ValidationError("config needs 'data' and [roles]")
    data = Path(d["data"])
    if base_dir is not None and not data.is_absolute():
        data = base_dir / data
    learn = d.get("learners", {})
    if isinstance(learn, list):
        learn = {"candidates": learn}
    effect = d.get("effect", "RT")
    kw = dict(
        data=str(data),
        roles=_roles(d["roles"]),
        effects=(effect,) if isinstance(effect, str) else tuple(effect),
        d0=Policy.from_dict(d["d0"]) if "d0" in d else None,
        d1=Policy.from_dict(d["d1"]) if "d1" in d else None,
        learners=tuple(learn.get("candidates", DEFAULT_LEARNERS)),
        stacking=learn.get("stacking", "convex"),
        cv_folds=int(learn.get("cv_folds", 5)),
        riesz=RieszFunctionClass.from_dict(d.get("riesz", {})),
        crossfit_folds=int(d.get("crossfit_folds", 5)),
        epochs=int(d.get("epochs", d.get("riesz", {}).get("epochs", 20))),
        seed=int(d.get("seed", 0)),
        out=d.get("out"),
        format=d.get("format", "table"),
        allow_cross_world=bool(d.get("allow_cross_world", False)),
        zpi_strategy=d.get("zpi_strategy", "treatment"),
        zpi_copies=int(d.get("zpi_copies", 10)),
    )
    for k, v in overrides.items():
        if v is not None:
            kw[k] = v
    return RunConfig(**kw)


def parse_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            d = tomli.load(fh)
    except tomli.TOMLDecodeError as e:
        raise ValidationError(f"cannot parse {path}: {e}") from None
    return config_from_dict(d, path.parent, **overrides)


def run(config: RunConfig) -> tuple[EffectReport, dict]:
    """Estimate the configured effects; returns the report and the full run manifest."""
    data = load_csv(config.data, config.roles)
    if "N" in config.effects and config.roles.has_moc:
        warnings.warn("natural effects with an intermediate confounder rely on a cross-world "
                      "independence assumption that Z makes implausible", CrossWorldWarning, stacklevel=2)
    aug = augment_zpi(data, seed=config.seed, strategy=config.zpi_strategy, copies=config.zpi_copies)
    aug = make_folds(aug, config.crossfit_folds, seed=config.seed)
    ensemble = EnsembleSpec.from_names(config.learners, config.cv_folds, config.stacking)
    est = engine.estimate_effects(aug, config.effects, config.policies, ensemble, config.riesz,
                                  seed=config.seed, allow_cross_world=config.allow_cross_world)
    manifest = {
        "config_hash": config.digest(),
        "config": config.to_dict(),
        "seed": config.seed,
        "n": data.n,
        "fold_sizes": aug.fold_sizes(),
        "positivity": est.positivity.to_dict() if est.positivity else None,
        "functionals": {k: {"plugin": e.plugin, "estimate": e.estimate, "se": e.se,
                            "fits": est.artifacts[k].log} for k, e in est.functionals.items()},
    }
    summary = {"config_hash": manifest["config_hash"], "seed": config.seed, "n": data.n,
               "fold_sizes": manifest["fold_sizes"]}
    return build_report(est, config.effects, summary), manifest


# -- entry point -------------------------------------------------------------

def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def _cmd_run(args) -> int:
    cfg = parse_config(args.config, seed=args.seed, effects=(args.effect,) if args.effect else None,
                       crossfit_folds=args.folds, epochs=args.epochs, out=args.out, format=args.format,
                       allow_cross_world=True if args.allow_cross_world else None)
    report, manifest = run(cfg)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if cfg.out:
        write_report(report, cfg.out, cfg.format)
        man = Path(str(cfg.out) + ".manifest.json")
        man.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if cfg.format == "json" and not cfg.out:
        sys.stdout.write(report.to_json())
    else:
        sys.stdout.write(report.to_table())
    return 0


def _cmd_simulate(args) -> int:
    scm = SCMSpec.load(args.scm)
    data = simulate(scm, args.n, args.seed)
    write_csv(data, args.out)
    print(f"wrote {data.n} rows to {args.out}", file=sys.stderr)
    return 0


def _cmd_truth(args) -> int:
    scm = SCMSpec.load(args.scm)
    policies = None
    if args.policies:
        with open(args.policies, "rb") as fh:
            p = tomli.load(fh)
        policies = (Policy.from_dict(p["d0"]), Policy.from_dict(p["d1"]))
    if args.effect in EFFECT_FAMILIES:
        table = truth_table(scm, args.effect, policies, args.draws, args.seed)
        rows = [(k, table.values[k], table.se[k]) for k in sorted(table.values)]
        if args.out:
            table.save(args.out)
    else:
        if args.effect not in TWINS and "(" not in args.effect:
            from .errors import UnknownTwinName
            raise UnknownTwinName(f"unknown effect family, twin or functional {args.effect!r}")
        v, se = truth_counterfactual(scm, args.effect, policies, args.draws, args.seed)
        rows = [(args.effect, v, se)]
    print(f"{'quantity':<14}{'truth':>12}{'MC SE':>12}")
    for k, v, se in rows:
        print(f"{k:<14}{v:>12.5f}{se:>12.5f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mediator", description="Mediation effect estimation")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="estimate effects from a TOML config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--effect", choices=EFFECT_FAMILIES)
    r.add_argument("--folds", type=int)
    r.add_argument("--epochs", type=int)
    r.add_argument("--out")
    r.add_argument("--format", choices=("json", "table"))
    r.add_argument("--allow-cross-world", action="store_true",
                   help="permit NDE/NIE with an intermediate confounder (Z is dropped)")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("simulate", help="draw a dataset from an SCM fixture")
    s.add_argument("--scm", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=_cmd_simulate)

    t = sub.add_parser("truth", help="Monte Carlo ground truth for an SCM fixture")
    t.add_argument("--scm", required=True)
    t.add_argument("--effect", required=True, help="N, RI, RT, a twin name (S1') or a functional key (R4(0,0,1,1))")
    t.add_argument("--draws", type=int, default=1_000_000)
    t.add_argument("--seed", type=int)
    t.add_argument("--policies", help="TOML file with [d0] and [d1] tables")
    t.add_argument("--out", help="write the truth table as JSON")
    t.set_defaults(func=_cmd_truth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.showwarning = _show_warning
    try:
        return args.func(args)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 3
    except (ValidationError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
