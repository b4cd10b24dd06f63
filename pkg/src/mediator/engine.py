"""Cross-fitted sequential regression, Riesz weights and one-step estimation.

For a program with steps ``1..K`` the per-row influence function is

    phi_i = sum_k alpha_k(x_i) * (pseudo_k(x_i) - nu_k(x_i)) + nu_K(S_theta x_i) - theta

where ``pseudo_1 = Y`` and ``pseudo_k = nu_{k-1}(S_k x)``.  Every ``nu_k``,
``alpha_k`` evaluation of a row comes from models fitted without that row's
fold.

Policies that depend on the unit's own treatment (``natural``,
``threshold_shift``) are handled by indexing the whole program by the
unit's natural treatment level: for each level ``l`` the shifts are
evaluated at ``d(l, w)`` and the outermost representer carries the weight
``1{A = l}``.  Constant policies need a single pass.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import learners
from .dataset import AugmentedDataset, PositivityReport, positivity_diagnostics
from .errors import (
    LengthMismatch,
    MissingFunctional,
    NonFiniteEstimate,
    NumericalError,
    ValidationError,
    ZeroSE,
)
from .estimands import (
    Contrast,
    FunctionalSpec,
    RegressionProgram,
    effects_to_contrasts,
    functionals_in,
    program_for,
)
from .policies import IDENTITY, Policy, ShiftMap
from .riesz import RieszFunctionClass, recursive_riesz

Z95 = 1.959963984540054
MAX_ORIGIN_LEVELS = 20


def _seed(*parts) -> int:
    return zlib.crc32(repr(parts).encode()) & 0x7FFFFFFF


@dataclass
class GroupArtifacts:
    """Held-out evaluations for one origin group (all rows; arrays of length n)."""

    weight: np.ndarray
    nu_obs: list[np.ndarray]
    pseudo: list[np.ndarray]
    terminal: np.ndarray
    alpha: list[np.ndarray]
    origin: float | None = None
    correction: np.ndarray | None = None


@dataclass
class FitArtifacts:
    groups: list[GroupArtifacts]
    spec: FunctionalSpec | None = None
    log: list[dict] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.groups[0].terminal)

    def plugin(self) -> float:
        return float(np.mean(sum(g.weight * g.terminal for g in self.groups)))


@dataclass
class EffectEstimate:
    name: str
    plugin: float
    estimate: float
    eif: np.ndarray
    se: float
    ci: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "plugin": self.plugin,
            "se": self.se,
            "ci_lower": self.ci[0],
            "ci_upper": self.ci[1],
        }


def _origin_groups(program: RegressionProgram, data: AugmentedDataset):
    n = data.n
    if program.origin_free:
        return [(None, np.ones(n))]
    levels = data.base.treatment_levels()
    if levels.size > MAX_ORIGIN_LEVELS:
        raise ValidationError(
            f"policies that depend on the natural treatment need a discrete treatment "
            f"(at most {MAX_ORIGIN_LEVELS} levels, found {levels.size})"
        )
    return [(float(lv), (data.base.a == lv).astype(float)) for lv in levels]


def run_program(program: RegressionProgram, data: AugmentedDataset, ensemble: learners.EnsembleSpec,
                riesz_class: RieszFunctionClass, seed: int = 0, cache: dict | None = None) -> tuple[FitArtifacts, float]:
    """Fit all steps and representers with cross-fitting; return artifacts and the plug-in value."""
    cache = {} if cache is None else cache
    if program.needs_zpi and data.zpi.shape[1] != data.base.z.shape[1]:
        raise ValidationError("program swaps Z but the data carry no Z^pi columns")
    n, K = data.n, program.depth
    y = data.base.y
    shifts = program.shifts()
    folds = range(1, data.folds + 1)
    arts = FitArtifacts([], program.spec)
    # seeds follow the program's content, so programs with the same shifts give the same fits
    tag = repr(shifts)
    for origin, omega in _origin_groups(program, data):
        org = None if origin is None else np.full(n, origin)
        nu_obs = [np.zeros(n) for _ in range(K)]
        pseudo = [y] + [np.zeros(n) for _ in range(K - 1)]
        terminal = np.zeros(n)
        alpha = [np.zeros(n) for _ in range(K)]
        paired = {}
        for k in range(K - 1):
            if shifts[k].swap_z:
                paired[k + 1] = np.zeros(n)
        for k, step in enumerate(program.steps):
            for v in folds:
                train, held = data.split(v)
                x_train = data.design(step.groups, IDENTITY, org, train)
                if k == 0:
                    key = ("mu", step.groups, v)
                    if key not in cache:
                        cache[key] = learners.fit(ensemble, x_train, y[train], _seed(seed, *key))
                    model = cache[key]
                else:
                    model = learners.fit(ensemble, x_train, pseudo[k][train],
                                         _seed(seed, tag, origin, k, v))
                nu_obs[k][held] = model.predict(data.design(step.groups, IDENTITY, org, held))
                copies = data.copies if shifts[k].swap_z else 1
                per_copy = [model.predict(data.design(step.groups, shifts[k], org, held, copy=c))
                            for c in range(copies)]
                shifted = np.mean(per_copy, axis=0)
                if shifts[k].swap_z:
                    paired[k + 1][held] = per_copy[0]
                if k < K - 1:
                    pseudo[k + 1][held] = shifted
                else:
                    terminal[held] = shifted
                arts.log.append({"origin": origin, "fold": v, "step": k + 1, "learners": model.selected,
                                 "cv_risk": model.cv_risk})
        for v in folds:
            train, held = data.split(v)
            try:
                fits = recursive_riesz(program, data, riesz_class, _seed(seed, "alpha", tag, origin, v),
                                       rows=train, origin=org, outer_weight=omega[train])
            except NumericalError as e:
                raise type(e)(f"{program.spec.key}, fold {v}: {e}") from e
            for j, fit in enumerate(fits):
                k = K - 1 - j
                vals = fit(data.design(program.steps[k].groups, IDENTITY, org, held))
                alpha[k][held] = vals
                arts.log.append({"origin": origin, "fold": v, "step": k + 1, "riesz_loss": fit.loss,
                                 "riesz_trace": fit.trace,
                                 "clipped": int(np.sum(np.abs(vals) >= fit.clip * (1 - 1e-12)))})
        correction = _pairing_correction(data, ensemble, alpha, paired, org, _seed(seed, "pair", tag, origin))
        arts.groups.append(GroupArtifacts(omega, nu_obs, pseudo, terminal, alpha, origin, correction))
    return arts, arts.plugin()


def _pairing_correction(data, ensemble, alpha, paired, org, seed):
    """Re-attribute the Z main effect of permuted-Z pseudo-outcomes to the row that owns that Z.

    A swap step's residual ``alpha * (nu(Z^pi, M, ...) - nu_k)`` pairs one
    unit's M with other units' Z.  With ``g(z, a, w) = E[alpha * nu(z, M, ...)
    | A=a, W=w]``, estimated by regressing ``alpha * nu(Z^pi, ...)`` on
    ``(A, Z^pi, W)``, the term ``g(Z_i) - mean_c g(Z^pi_c,i)`` has mean zero
    (Z and Z^pi share their law given A, W) and moves the Z contribution onto
    its own row, so per-row influence values keep their covariance with
    functionals that use the unit's own Z.
    """
    n = data.n
    out = np.zeros(n)
    groups = ("A", "Z", "W")
    own, perm = ShiftMap(), ShiftMap(swap_z=True)
    for k, values in paired.items():
        target = alpha[k] * values
        for v in range(1, data.folds + 1):
            train, held = data.split(v)
            model = learners.fit(ensemble, data.design(groups, perm, org, train), target[train],
                                 _seed(seed, k, v))
            swapped = np.mean([model.predict(data.design(groups, perm, org, held, copy=c))
                               for c in range(data.copies)], axis=0)
            out[held] += model.predict(data.design(groups, own, org, held)) - swapped
    return out


def assemble_eif(artifacts: FitArtifacts, theta: float) -> np.ndarray:
    """Uncentered influence values ``phi_i`` at ``theta``."""
    n = artifacts.n
    phi = np.full(n, -float(theta))
    for g in artifacts.groups:
        arrays = [g.weight, g.terminal, *g.nu_obs, *g.pseudo, *g.alpha]
        if any(len(a) != n for a in arrays) or not (len(g.nu_obs) == len(g.pseudo) == len(g.alpha)):
            raise LengthMismatch("artifact arrays disagree in length or depth")
        phi += g.weight * g.terminal
        if g.correction is not None:
            if len(g.correction) != n:
                raise LengthMismatch("correction array has the wrong length")
            phi += g.correction
        for a, p, nu in zip(g.alpha, g.pseudo, g.nu_obs):
            phi += a * (p - nu)
    return phi


def _se(eif: np.ndarray) -> float:
    n = len(eif)
    if n < 2:
        return 0.0
    sd = float(np.std(eif, ddof=1))
    if sd == 0.0:
        warnings.warn("influence function is constant; standard error reported as 0", RuntimeWarning,
                      stacklevel=3)
    return sd / math.sqrt(n)


def onestep(name: str, theta_plugin: float, eif_uncentered: np.ndarray) -> EffectEstimate:
    """One-step correction: ``theta_plugin + mean(phi)``, with Wald 95% interval."""
    eif_uncentered = np.asarray(eif_uncentered, dtype=float)
    if not np.all(np.isfinite(eif_uncentered)) or not math.isfinite(theta_plugin):
        raise NonFiniteEstimate(f"{name}: non-finite influence values")
    est = float(theta_plugin + np.mean(eif_uncentered))
    eif = eif_uncentered - np.mean(eif_uncentered)
    se = _se(eif)
    return EffectEstimate(name, float(theta_plugin), est, eif, se, (est - Z95 * se, est + Z95 * se))


def contrast(estimates: dict[str, EffectEstimate], table: dict[str, Contrast]) -> dict[str, EffectEstimate]:
    """Linear contrasts of functional estimates; influence functions add with the same signs."""
    out = {}
    for name, terms in table.items():
        est, plug, eif = 0.0, 0.0, None
        for sign, spec in terms:
            key = spec.key if isinstance(spec, FunctionalSpec) else spec
            if key not in estimates:
                raise MissingFunctional(f"{name} needs {key}")
            e = estimates[key]
            est += sign * e.estimate
            plug += sign * e.plugin
            eif = sign * e.eif if eif is None else eif + sign * e.eif
        se = _se(eif)
        out[name] = EffectEstimate(name, est, est, eif, se, (est - Z95 * se, est + Z95 * se))
        out[name].plugin = plug
    return out


@dataclass(frozen=True)
class FalsificationResult:
    estimate: float
    se: float
    statistic: float
    p_value: float
    reject: bool
    alpha: float = 0.05

    @property
    def decision(self) -> str:
        if self.reject:
            return "reject H0: R = 0; evidence of intermediate confounding by Z"
        return "fail to reject H0: R = 0; no conclusion about intermediate confounding can be made"

    def to_dict(self) -> dict:
        return {
            "null": "R = 0",
            "estimate": self.estimate,
            "se": self.se,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "decision": self.decision,
        }


def falsification_test(remainder: EffectEstimate | tuple[float, float], level: float = 0.05) -> FalsificationResult:
    """Two-sided Wald test of ``R = 0``."""
    if isinstance(remainder, EffectEstimate):
        est, se = remainder.estimate, remainder.se
    else:
        est, se = map(float, remainder)
    if se <= 0:
        raise ZeroSE("standard error of R is zero; the Wald test is undefined")
    z = est / se
    p = math.erfc(abs(z) / math.sqrt(2))
    return FalsificationResult(est, se, z, p, p < level, level)


@dataclass
class Estimation:
    functionals: dict[str, EffectEstimate]
    effects: dict[str, dict[str, EffectEstimate]]
    falsification: FalsificationResult | None
    positivity: PositivityReport | None
    artifacts: dict[str, FitArtifacts]
    warnings: list[str]


def default_policies(data: AugmentedDataset) -> tuple[Policy, Policy]:
    levels = data.base.treatment_levels()
    if levels.size != 2:
        from .errors import BadPolicy
        raise BadPolicy(f"treatment has {levels.size} levels; give d0/d1 policies for non-binary treatments")
    return Policy.constant(levels[0]), Policy.constant(levels[1])


def estimate_effects(data: AugmentedDataset, families, policies: tuple[Policy, Policy] | None = None,
                     ensemble: learners.EnsembleSpec | None = None,
                     riesz_class: RieszFunctionClass | None = None, seed: int = 0,
                     allow_cross_world: bool = False) -> Estimation:
    """Estimate every effect in the requested families on shared folds and shared outcome fits."""
    families = [families] if isinstance(families, str) else list(families)
    ensemble = ensemble or learners.EnsembleSpec.from_names(["mean", "linear"])
    riesz_class = riesz_class or RieszFunctionClass()
    policies = policies or default_policies(data)
    has_moc = data.roles.has_moc
    tables = {f: effects_to_contrasts(f, has_moc, allow_cross_world) for f in families}
    notes = []
    if "N" in families and has_moc:
        notes.append("natural effects computed with Z dropped; the cross-world assumption "
                     "fails if Z is an intermediate confounder")
    specs: dict[str, FunctionalSpec] = {}
    for t in tables.values():
        for s in functionals_in(t):
            specs.setdefault(s.key, s)
    cache: dict = {}
    functionals, artifacts = {}, {}
    for key, spec in specs.items():
        prog = program_for(spec, policies, has_moc=has_moc and spec.kind != "natural2",
                           has_zpi=data.zpi.shape[1] > 0)
        arts, theta = run_program(prog, data, ensemble, riesz_class, seed, cache)
        phi = assemble_eif(arts, theta)
        functionals[key] = onestep(key, theta, phi)
        artifacts[key] = arts
    effects = {f: contrast(functionals, t) for f, t in tables.items()}
    fals = None
    if "RT" in effects:
        r = effects["RT"]["R"]
        fals = falsification_test(r) if r.se > 0 else None
    weights = np.concatenate([a for arts in artifacts.values() for g in arts.groups for a in g.alpha])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pos = positivity_diagnostics(None, weights, bound=riesz_class.clip)
    notes.extend(str(w.message) for w in caught)
    return Estimation(functionals, effects, fals, pos, artifacts, notes)
