"""Structural causal models with known ground truth.

An SCM is a list of equations in causal order: covariates ``W...``, one
treatment ``A``, optional intermediate confounders ``Z...``, mediators
``M...`` and one outcome ``Y``.  Each right-hand side is a small arithmetic
expression over earlier variables and the equation's own exogenous noise
``U``; noises are mutually independent, so every conditional law used by
the identification formulas is the structural one.

Fixture files are TOML::

    seed = 3
    [[W]]
    name = "W1"
    eq = "U"
    noise = { dist = "normal", sd = 1.0 }
    [A]
    name = "A"
    eq = "U < sigmoid(0.4 * W1)"
    noise = { dist = "uniform" }
    ...

Counterfactuals share a unit's exogenous draws across treatment levels
(so ``Z(1)`` and ``Z(0)`` are coupled), while twin draws ``T(a)`` and
randomized mediator draws ``G(a)`` use fresh noise given the same W.
"""

from __future__ import annotations

import ast
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .dataset import MediationDataset, VariableRoles
from .errors import EquationEvalError, MocAbsent, MocPresent, UnknownTwinName, ValidationError
from .estimands import EFFECT_FAMILIES, FunctionalSpec, effects_to_contrasts, functionals_in
from .policies import Policy

MIN_DRAWS = 10_000
DEFAULT_DRAWS = 1_000_000

# -- expressions -------------------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_CMPOPS = {
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
}


def _sigmoid(x):
    return 0.5 * (1 + np.tanh(0.5 * np.asarray(x, dtype=float)))


_FUNCS = {
    "sigmoid": _sigmoid,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "min": np.minimum,
    "max": np.maximum,
    "where": lambda c, x, y: np.where(np.asarray(c) != 0, x, y),
}


def _compile(node, names: set[str], source: str):
    """Translate a Python AST into a nested-tuple expression tree."""
    if isinstance(node, ast.Expression):
        return _compile(node.body, names, source)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return ("num", float(node.value))
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise EquationEvalError(f"unknown name {node.id!r} in {source!r}")
        return ("var", node.id)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return ("bin", type(node.op), _compile(node.left, names, source), _compile(node.right, names, source))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, names, source)
        return ("neg", inner) if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
        return ("cmp", type(node.ops[0]), _compile(node.left, names, source),
                _compile(node.comparators[0], names, source))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        return ("call", node.func.id, tuple(_compile(a, names, source) for a in node.args))
    raise EquationEvalError(f"unsupported expression {ast.dump(node)[:60]} in {source!r}")


def _evaluate(tree, env: Mapping[str, np.ndarray]):
    tag = tree[0]
    if tag == "num":
        return tree[1]
    if tag == "var":
        return env[tree[1]]
    if tag == "bin":
        return _BINOPS[tree[1]](_evaluate(tree[2], env), _evaluate(tree[3], env))
    if tag == "neg":
        return -_evaluate(tree[1], env)
    if tag == "cmp":
        return np.asarray(_CMPOPS[tree[1]](_evaluate(tree[2], env), _evaluate(tree[3], env)), dtype=float)
    return _FUNCS[tree[1]](*(_evaluate(a, env) for a in tree[2]))


# -- model -------------------------------------------------------------------

@dataclass(frozen=True)
class Noise:
    dist: str = "normal"
    mean: float = 0.0
    sd: float = 1.0
    low: float = 0.0
    high: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.dist not in ("normal", "uniform", "bernoulli"):
            raise ValidationError(f"unknown noise distribution {self.dist!r}")
        if self.sd < 0 or self.high < self.low or not 0 <= self.p <= 1:
            raise ValidationError(f"bad noise parameters {self}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.dist == "normal":
            return rng.normal(self.mean, self.sd, n)
        if self.dist == "uniform":
            return rng.uniform(self.low, self.high, n)
        return (rng.random(n) < self.p).astype(float)

    def to_dict(self) -> dict:
        if self.dist == "normal":
            return {"dist": "normal", "mean": self.mean, "sd": self.sd}
        if self.dist == "uniform":
            return {"dist": "uniform", "low": self.low, "high": self.high}
        return {"dist": "bernoulli", "p": self.p}


@dataclass(frozen=True)
class Equation:
    name: str
    expr: str
    noise: Noise = Noise()
    tree: tuple = field(default=(), compare=False, repr=False)

    def compiled(self, parents: set[str]) -> "Equation":
        try:
            node = ast.parse(str(self.expr), mode="eval")
        except SyntaxError as e:
            raise EquationEvalError(f"cannot parse {self.expr!r}: {e.msg}") from None
        tree = _compile(node, parents | {"U"}, str(self.expr))
        return Equation(self.name, str(self.expr), self.noise, tree)

    def __call__(self, env: Mapping[str, np.ndarray], u: np.ndarray) -> np.ndarray:
        out = _evaluate(self.tree, {**env, "U": u})
        out = np.broadcast_to(np.asarray(out, dtype=float), u.shape).copy()
        if not np.all(np.isfinite(out)):
            raise EquationEvalError(f"equation for {self.name} produced non-finite values")
        return out

    def to_dict(self) -> dict:
        return {"name": self.name, "eq": self.expr, "noise": self.noise.to_dict()}


def _equation(d) -> Equation:
    if isinstance(d, Equation):
        return d
    d = dict(d)
    try:
        return Equation(str(d["name"]), str(d["eq"]), Noise(**d.get("noise", {})))
    except KeyError as e:
        raise ValidationError(f"equation entry missing {e.args[0]!r}") from None
    except TypeError as e:
        raise ValidationError(f"bad noise entry: {e}") from None


@dataclass(frozen=True)
class SCMSpec:
    """Structural equations in causal order ``W, A, Z, M, Y``."""

    covariates: tuple[Equation, ...]
    treatment: Equation
    moc: tuple[Equation, ...]
    mediators: tuple[Equation, ...]
    outcome: Equation
    seed: int = 0

    def __post_init__(self):
        seen: set[str] = set()
        groups = []
        for grp in (self.covariates, (self.treatment,), self.moc, self.mediators, (self.outcome,)):
            out = []
            for eq in grp:
                if eq.name in seen or eq.name == "U":
                    raise ValidationError(f"duplicate or reserved variable name {eq.name!r}")
                out.append(eq.compiled(set(seen)))
                seen.add(eq.name)
            groups.append(tuple(out))
        if not self.mediators:
            raise ValidationError("an SCM needs at least one mediator")
        object.__setattr__(self, "covariates", groups[0])
        object.__setattr__(self, "treatment", groups[1][0])
        object.__setattr__(self, "moc", groups[2])
        object.__setattr__(self, "mediators", groups[3])
        object.__setattr__(self, "outcome", groups[4][0])

    @classmethod
    def from_dict(cls, d: Mapping) -> "SCMSpec":
        def many(key):
            v = d.get(key, [])
            return tuple(_equation(e) for e in ([v] if isinstance(v, Mapping) else v))

        if "A" not in d or "Y" not in d:
            raise ValidationError("SCM needs [A] and [Y] equations")
        return cls(many("W"), _equation(d["A"]), many("Z"), many("M"), _equation(d["Y"]), int(d.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "SCMSpec":
        import tomli

        with open(path, "rb") as fh:
            return cls.from_dict(tomli.load(fh))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "W": [e.to_dict() for e in self.covariates],
            "A": self.treatment.to_dict(),
            "Z": [e.to_dict() for e in self.moc],
            "M": [e.to_dict() for e in self.mediators],
            "Y": self.outcome.to_dict(),
        }

    @property
    def has_moc(self) -> bool:
        return bool(self.moc)

    def roles(self) -> VariableRoles:
        return VariableRoles(
            covariates=tuple(e.name for e in self.covariates),
            treatment=self.treatment.name,
            moc=tuple(e.name for e in self.moc),
            mediators=tuple(e.name for e in self.mediators),
            outcome=self.outcome.name,
        )


# -- sampling ----------------------------------------------------------------

class _Units:
    """One batch of units: covariates, natural treatment and all exogenous noises."""

    def __init__(self, scm: SCMSpec, n: int, rng: np.random.Generator):
        self.scm = scm
        self.w: dict[str, np.ndarray] = {}
        for eq in scm.covariates:
            self.w[eq.name] = eq(self.w, eq.noise.draw(rng, n))
        self.a = scm.treatment(self.w, scm.treatment.noise.draw(rng, n))
        # unit noise, then fresh noise for twin (T) and randomized (G) draws
        self.uz = [eq.noise.draw(rng, n) for eq in scm.moc]
        self.um = [eq.noise.draw(rng, n) for eq in scm.mediators]
        self.uy = scm.outcome.noise.draw(rng, n)
        self.uz_t = [eq.noise.draw(rng, n) for eq in scm.moc]
        self.uz_g = [eq.noise.draw(rng, n) for eq in scm.moc]
        self.um_g = [eq.noise.draw(rng, n) for eq in scm.mediators]

    def level(self, policy: Policy) -> np.ndarray:
        cov = {**self.w, self.scm.treatment.name: self.a}
        return np.broadcast_to(np.asarray(policy(self.a, cov), dtype=float), self.a.shape)

    def _env(self, a, extra=()):
        env = dict(self.w)
        env[self.scm.treatment.name] = a
        for d in extra:
            env.update(d)
        return env

    def z(self, a, noise=None) -> dict:
        noise = self.uz if noise is None else noise
        out: dict[str, np.ndarray] = {}
        for eq, u in zip(self.scm.moc, noise):
            out[eq.name] = eq(self._env(a, (out,)), u)
        return out

    def m(self, a, z: dict, noise=None) -> dict:
        noise = self.um if noise is None else noise
        out: dict[str, np.ndarray] = {}
        for eq, u in zip(self.scm.mediators, noise):
            out[eq.name] = eq(self._env(a, (z, out)), u)
        return out

    def y(self, a, z: dict, m: dict) -> np.ndarray:
        return self.scm.outcome(self._env(a, (z, m)), self.uy)


def simulate(scm: SCMSpec, n: int, seed: int | None = None) -> MediationDataset:
    """Draw ``n`` observational rows."""
    rng = np.random.default_rng(scm.seed if seed is None else seed)
    u = _Units(scm, int(n), rng)
    z = u.z(u.a)
    m = u.m(u.a, z)
    y = u.y(u.a, z, m)
    cols = {**u.w, scm.treatment.name: u.a, **z, **m, scm.outcome.name: y}
    return MediationDataset.from_columns(cols, scm.roles())


# -- counterfactual truths ---------------------------------------------------

# (outcome-arm index, Z source of Y, mediator-arm index, Z source of M); a Z
# source is ("Z", j) for the unit's own Z(d_j) or ("T", j) for a fresh twin.
TWINS = {
    "S0": (1, ("Z", 1), 1, ("Z", 1)),
    "S1": (0, ("Z", 1), 1, ("Z", 1)),
    "S2": (0, ("Z", 0), 1, ("Z", 1)),
    "S3": (0, ("Z", 0), 1, ("Z", 0)),
    "S4": (0, ("Z", 0), 0, ("Z", 0)),
    "S1'": (0, ("Z", 1), 1, ("T", 1)),
    "S2'": (0, ("Z", 0), 1, ("T", 1)),
    "S2''": (0, ("T", 0), 1, ("Z", 1)),
    "S3''": (0, ("T", 0), 1, ("Z", 0)),
}


def _nested(u: _Units, levels, j_y, zsrc_y, j_m, zsrc_m, fresh_m=False) -> np.ndarray:
    """``Y(d_{j_y}, Z_src, M(d_{j_m}, Z_src'))`` for one batch of units."""
    def zs(src):
        kind, j = src
        return u.z(levels[j], u.uz if kind == "Z" else (u.uz_t if kind == "T" else u.uz_g))

    z_m = zs(zsrc_m)
    m = u.m(levels[j_m], z_m, u.um_g if fresh_m else None)
    return u.y(levels[j_y], zs(zsrc_y), m)


def _functional_cf(u: _Units, levels, spec: FunctionalSpec, has_moc: bool) -> np.ndarray:
    ix = spec.indices
    if spec.kind == "natural2":
        # Y(d_a1, M(d_a2)), with any Z following its own arm (cross-world when Z is present)
        a1, a2 = ix
        z1, z2 = u.z(levels[a1]), u.z(levels[a2])
        return u.y(levels[a1], z1, u.m(levels[a2], z2))
    if not has_moc:
        raise MocAbsent(f"{spec.key} needs an intermediate confounder in the SCM")
    if spec.kind == "coupled3":
        a1, a2, a3 = ix
        return _nested(u, levels, a1, ("Z", a2), a3, ("Z", a2))
    a1, a2, a3, a4 = ix
    return _nested(u, levels, a1, ("Z", a2), a3, ("T", a4))


def _resolve(target) -> tuple[str, object]:
    if isinstance(target, FunctionalSpec):
        return target.key, target
    if isinstance(target, str):
        if target in TWINS:
            return target, target
        try:
            spec = FunctionalSpec.parse(target)
        except (ValueError, KeyError, IndexError):
            raise UnknownTwinName(f"unknown twin or functional {target!r}; twins are {sorted(TWINS)}") from None
        return spec.key, spec
    raise UnknownTwinName(f"unknown target {target!r}")


def _default_policies(policies):
    return policies or (Policy.constant(0), Policy.constant(1))


def _mc(scm, quantities: dict, contrasts: dict, policies, draws, seed, batch=200_000):
    """Accumulate per-draw sums for ``quantities`` (name -> fn(units, levels)) and signed contrasts."""
    if draws < MIN_DRAWS:
        raise ValidationError(f"need at least {MIN_DRAWS} draws, got {draws}")
    rng = np.random.default_rng(seed)
    names = list(quantities) + list(contrasts)
    s1 = dict.fromkeys(names, 0.0)
    s2 = dict.fromkeys(names, 0.0)
    done = 0
    while done < draws:
        b = min(batch, draws - done)
        u = _Units(scm, b, rng)
        levels = (u.level(policies[0]), u.level(policies[1]))
        vals = {k: f(u, levels) for k, f in quantities.items()}
        for k, terms in contrasts.items():
            vals[k] = sum(sign * vals[q] for sign, q in terms)
        for k in names:
            s1[k] += float(np.sum(vals[k]))
            s2[k] += float(np.sum(vals[k] ** 2))
        done += b
    out = {}
    for k in names:
        mean = s1[k] / draws
        var = max(s2[k] / draws - mean ** 2, 0.0) * draws / (draws - 1)
        out[k] = (mean, math.sqrt(var / draws))
    return out


def truth_counterfactual(scm: SCMSpec, target, policies: tuple[Policy, Policy] | None = None,
                         draws: int = DEFAULT_DRAWS, seed: int | None = None) -> tuple[float, float]:
    """Monte Carlo mean of a counterfactual and its MC standard error.

    ``target`` is a twin name (``S0``..``S4``, ``S1'``, ``S2'``, ``S2''``,
    ``S3''``) or a functional (spec or key such as ``"R4(0,0,1,1)"``), read
    as its counterfactual: ``natural2(a1, a2) = Y(a1, M(a2))``,
    ``coupled3(a1, a2, a3) = Y(a1, Z(a2), M(a3, Z(a2)))`` and
    ``randomized4(a1, a2, a3, a4) = Y(a1, Z(a2), M(a3, T(a4)))``.
    Index ``j`` selects policy ``d_j`` applied to the natural treatment.
    """
    policies = _default_policies(policies)
    key, obj = _resolve(target)
    if isinstance(obj, str):
        if not scm.has_moc:
            raise MocAbsent(f"twin {key} needs an intermediate confounder in the SCM")
        fn = lambda u, lv, t=TWINS[obj]: _nested(u, lv, *t)  # noqa: E731
    else:
        fn = lambda u, lv, s=obj: _functional_cf(u, lv, s, scm.has_moc)  # noqa: E731
    res = _mc(scm, {key: fn}, {}, policies, draws, scm.seed if seed is None else seed)
    return res[key]


def truth_statistical(scm: SCMSpec, spec: FunctionalSpec | str, policies: tuple[Policy, Policy] | None = None,
                      draws: int = DEFAULT_DRAWS, seed: int | None = None) -> tuple[float, float]:
    """The identified statistical functional, by nested sampling from the SCM's conditional laws.

    Every nesting level draws fresh noise: ``z ~ P(Z | d_j, w)``,
    ``m ~ P(M | d_j, z, w)``, and ``Y`` at the innermost level.
    ``natural2`` is only available for SCMs without Z, where
    ``E[Y | a, m, w]`` is the structural outcome law.
    """
    policies = _default_policies(policies)
    _, spec = _resolve(spec)
    if not isinstance(spec, FunctionalSpec):
        raise UnknownTwinName(f"{spec!r} is a twin, not a statistical functional")
    ix = spec.indices
    if spec.kind == "natural2" and scm.has_moc:
        raise MocPresent("natural2 statistical truth is only available without Z")
    if spec.kind != "natural2" and not scm.has_moc:
        raise MocAbsent(f"{spec.key} needs an intermediate confounder in the SCM")

    def fn(u: _Units, lv):
        uz_y, uz_m = u.uz_t, u.uz_g
        if spec.kind == "natural2":
            a1, a2 = ix
            return u.y(lv[a1], {}, u.m(lv[a2], {}, u.um_g))
        if spec.kind == "coupled3":
            a1, a2, a3 = ix
            z = u.z(lv[a2], uz_y)
            return u.y(lv[a1], z, u.m(lv[a3], z, u.um_g))
        a1, a2, a3, a4 = ix
        z = u.z(lv[a2], uz_y)
        t = u.z(lv[a4], uz_m)
        return u.y(lv[a1], z, u.m(lv[a3], t, u.um_g))

    res = _mc(scm, {spec.key: fn}, {}, policies, draws, scm.seed if seed is None else seed)
    return res[spec.key]


# -- truth tables ------------------------------------------------------------

RT_TWIN_CONTRASTS = {
    "P1": ((1, "S0"), (-1, "S1")),
    "P2": ((1, "S1'"), (-1, "S2'")),
    "P3": ((1, "S2''"), (-1, "S3''")),
    "P4": ((1, "S3"), (-1, "S4")),
    "R": ((1, "S1"), (-1, "S1'"), (1, "S2'"), (-1, "S2''"), (1, "S3''"), (-1, "S3")),
    "ATE": ((1, "S0"), (-1, "S4")),
}


@dataclass
class TruthTable:
    """Named true values with Monte Carlo standard errors."""

    values: dict[str, float]
    se: dict[str, float]
    draws: int
    seed: int
    family: str = ""

    def __getitem__(self, key) -> float:
        return self.values[key]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "draws": self.draws,
            "seed": self.seed,
            "entries": {k: {"value": self.values[k], "mc_se": self.se[k]} for k in sorted(self.values)},
        }

    @classmethod
    def from_dict(cls, d) -> "TruthTable":
        e = d["entries"]
        return cls({k: v["value"] for k, v in e.items()}, {k: v["mc_se"] for k, v in e.items()},
                   int(d["draws"]), int(d["seed"]), d.get("family", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TruthTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def truth_table(scm: SCMSpec, family: str, policies: tuple[Policy, Policy] | None = None,
                draws: int = DEFAULT_DRAWS, seed: int | None = None) -> TruthTable:
    """True functionals and effects of one family, with common random numbers across entries.

    ``RT`` effects use the twin definitions directly; ``RI`` uses randomized
    mediator draws with fresh noise; ``N`` uses nested counterfactuals.
    """
    if family not in EFFECT_FAMILIES:
        from .errors import UnknownEffect
        raise UnknownEffect(f"unknown effect family {family!r}")
    policies = _default_policies(policies)
    has_moc = scm.has_moc
    seed = scm.seed if seed is None else seed
    quantities: dict = {}
    if family == "RT":
        if not has_moc:
            from .errors import FamilyRoleMismatch
            raise FamilyRoleMismatch("recanting-twin effects need an intermediate confounder")
        for name, t in TWINS.items():
            quantities[name] = lambda u, lv, t=t: _nested(u, lv, *t)
        contrasts = RT_TWIN_CONTRASTS
    else:
        table = effects_to_contrasts(family, has_moc, allow_cross_world=True)
        for spec in functionals_in(table):
            if spec.kind == "randomized4":
                a1, a2, a3, a4 = spec.indices
                quantities[spec.key] = lambda u, lv, i=(a1, a2, a3, a4): _nested(
                    u, lv, i[0], ("Z", i[1]), i[2], ("G", i[3]), fresh_m=True)
            else:
                quantities[spec.key] = lambda u, lv, s=spec: _functional_cf(u, lv, s, has_moc)
        contrasts = {k: tuple((sign, s.key) for sign, s in terms) for k, terms in table.items()}
        if family == "RI":
            # total effect for reference; RIDE + RIIE need not equal it
            quantities["C3(1,1,1)" if has_moc else "N2(1,1)"] = (
                (lambda u, lv: _nested(u, lv, 1, ("Z", 1), 1, ("Z", 1))) if has_moc
                else (lambda u, lv: _functional_cf(u, lv, FunctionalSpec("natural2", (1, 1)), False)))
            quantities["C3(0,0,0)" if has_moc else "N2(0,0)"] = (
                (lambda u, lv: _nested(u, lv, 0, ("Z", 0), 0, ("Z", 0))) if has_moc
                else (lambda u, lv: _functional_cf(u, lv, FunctionalSpec("natural2", (0, 0)), False)))
            hi, lo = ("C3(1,1,1)", "C3(0,0,0)") if has_moc else ("N2(1,1)", "N2(0,0)")
            contrasts = {**contrasts, "ATE": ((1, hi), (-1, lo))}
    res = _mc(scm, quantities, contrasts, policies, draws, seed)
    return TruthTable({k: v[0] for k, v in res.items()}, {k: v[1] for k, v in res.items()}, draws, seed, family)


def counterfactual_draws(scm: SCMSpec, n: int, seed: int = 0,
                         policies: tuple[Policy, Policy] | None = None) -> dict[str, np.ndarray]:
    """Raw per-unit draws for coupling checks: first Z and M columns under each arm."""
    if not scm.has_moc:
        raise MocAbsent("coupling draws need an intermediate confounder")
    policies = _default_policies(policies)
    u = _Units(scm, n, np.random.default_rng(seed))
    lv = (u.level(policies[0]), u.level(policies[1]))
    zname, mname = scm.moc[0].name, scm.mediators[0].name
    z1, z0 = u.z(lv[1]), u.z(lv[0])
    t0 = u.z(lv[0], u.uz_g)
    return {
        "W": np.column_stack(list(u.w.values())) if u.w else np.empty((n, 0)),
        "Z1": z1[zname],
        "Z0": z0[zname],
        "T0": t0[zname],
        "M0": u.m(lv[0], z0)[mname],
        "G0": u.m(lv[0], t0, u.um_g)[mname],
    }
