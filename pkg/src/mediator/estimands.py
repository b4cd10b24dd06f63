"""Mediation functionals as sequential-regression programs, and effect contrasts.

Three functionals cover every effect family.  With ``mu(a, z, m, w) =
E[Y | a, z, m, w]`` and index ``j`` standing for policy ``d_j``:

``natural2(a1, a2)``
    ``E_W int mu(a1, m, w) dP(m | a2, w)`` (no Z).
``coupled3(a1, a2, a3)``
    ``E_W int int mu(a1, z, m, w) dP(m | a3, z, w) dP(z | a2, w)``, the mean of
    ``Y(a1, Z(a2), M(a3, Z(a2)))``.
``randomized4(a1, a2, a3, a4)``
    ``E_W int mu(a1, z, m, w) dP(z | a2, w) dP(m | a3, t, w) dP(t | a4, w)``,
    the mean of ``Y(a1, Z(a2), M(a3, T(a4)))`` with ``T(a4)`` an independent
    draw of ``Z(a4)`` given W.

Each program lists its regression steps innermost first.  Step ``k``
regresses its pseudo-outcome (step 1: Y; later: the previous step's
prediction under ``pseudo_shift``) on ``groups``; the estimate averages the
last step's prediction under ``terminal_shift``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import FamilyRoleMismatch, MissingZpi, MocAbsent, MocPresent, UnknownEffect
from .policies import Policy, ShiftMap, apply_policy

__all__ = [
    "Policy",
    "apply_policy",
    "FunctionalSpec",
    "Step",
    "RegressionProgram",
    "program_natural2",
    "program_coupled3",
    "program_randomized4",
    "program_for",
    "effects_to_contrasts",
    "EFFECT_FAMILIES",
]

EFFECT_FAMILIES = ("N", "RI", "RT")

_ARITY = {"natural2": 2, "coupled3": 3, "randomized4": 4}
_TAG = {"natural2": "N", "coupled3": "C", "randomized4": "R"}


@dataclass(frozen=True)
class FunctionalSpec:
    kind: str
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if self.kind not in _ARITY:
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if len(self.indices) != _ARITY[self.kind] or any(i not in (0, 1) for i in self.indices):
            raise ValueError(f"{self.kind} takes {_ARITY[self.kind]} indices in {{0, 1}}, got {self.indices}")

    @property
    def key(self) -> str:
        return f"{_TAG[self.kind]}{len(self.indices)}({','.join(map(str, self.indices))})"

    @classmethod
    def parse(cls, key: str) -> "FunctionalSpec":
        tag, rest = key[0], key[key.index("(") + 1:-1]
        kind = {v: k for k, v in _TAG.items()}[tag]
        return cls(kind, tuple(int(s) for s in rest.split(",")))

    def __str__(self):
        return self.key


N2 = lambda *ix: FunctionalSpec("natural2", ix)  # noqa: E731
C3 = lambda *ix: FunctionalSpec("coupled3", ix)  # noqa: E731
R4 = lambda *ix: FunctionalSpec("randomized4", ix)  # noqa: E731


@dataclass(frozen=True)
class Step:
    groups: tuple[str, ...]
    pseudo_shift: ShiftMap | None = None


@dataclass(frozen=True)
class RegressionProgram:
    spec: FunctionalSpec
    steps: tuple[Step, ...]
    terminal_shift: ShiftMap
    policies: tuple[Policy, Policy]

    @property
    def depth(self) -> int:
        return len(self.steps)

    def shifts(self) -> list[ShiftMap]:
        return [s.pseudo_shift for s in self.steps[1:]] + [self.terminal_shift]

    @property
    def needs_zpi(self) -> bool:
        return any(s.swap_z for s in self.shifts())

    @property
    def origin_free(self) -> bool:
        """True when every shift sets a constant level, so no shift depends on the unit's own treatment."""
        return all(s.set_treatment is None or s.set_treatment.is_constant for s in self.shifts())

    def describe(self) -> list[str]:
        out = []
        for k, s in enumerate(self.steps, 1):
            src = "Y" if s.pseudo_shift is None else f"nu{k - 1}[{s.pseudo_shift.describe()}]"
            out.append(f"step {k}: {src} ~ {'+'.join(s.groups)}")
        out.append(f"average nu{self.depth}[{self.terminal_shift.describe()}]")
        return out


def _check_policies(policies):
    d0, d1 = policies
    if not isinstance(d0, Policy) or not isinstance(d1, Policy):
        raise TypeError("policies must be a (d0, d1) pair of Policy objects")
    return d0, d1


def _set(policies, j, swap=False):
    return ShiftMap(set_treatment=policies[j], swap_z=swap)


def program_natural2(a1, a2, policies, has_moc: bool = False) -> RegressionProgram:
    if has_moc:
        raise MocPresent("natural2 is defined without an intermediate confounder")
    policies = _check_policies(policies)
    steps = (
        Step(("A", "M", "W")),
        Step(("A", "W"), _set(policies, a1)),
    )
    return RegressionProgram(N2(a1, a2), steps, _set(policies, a2), policies)


def program_coupled3(a1, a2, a3, policies, has_moc: bool = True) -> RegressionProgram:
    if not has_moc:
        raise MocAbsent("coupled3 needs an intermediate confounder")
    policies = _check_policies(policies)
    steps = (
        Step(("A", "Z", "M", "W")),
        Step(("A", "Z", "W"), _set(policies, a1)),
        Step(("A", "W"), _set(policies, a3)),
    )
    return RegressionProgram(C3(a1, a2, a3), steps, _set(policies, a2), policies)


def program_randomized4(a1, a2, a3, a4, policies, has_moc: bool = True,
                        has_zpi: bool = True) -> RegressionProgram:
    if not has_moc:
        raise MocAbsent("randomized4 needs an intermediate confounder")
    if not has_zpi:
        raise MissingZpi("randomized4 integrates Z through its permuted copy; augment the data first")
    policies = _check_policies(policies)
    steps = (
        Step(("A", "Z", "M", "W")),
        Step(("A", "M", "W"), _set(policies, a1, swap=True)),
        Step(("A", "Z", "W"), _set(policies, a2)),
        Step(("A", "W"), _set(policies, a3)),
    )
    return RegressionProgram(R4(a1, a2, a3, a4), steps, _set(policies, a4), policies)


def program_for(spec: FunctionalSpec, policies, has_moc: bool, has_zpi: bool = True) -> RegressionProgram:
    if spec.kind == "natural2":
        return program_natural2(*spec.indices, policies, has_moc=has_moc)
    if spec.kind == "coupled3":
        return program_coupled3(*spec.indices, policies, has_moc=has_moc)
    return program_randomized4(*spec.indices, policies, has_moc=has_moc, has_zpi=has_zpi)


# -- effect families ---------------------------------------------------------

Contrast = tuple[tuple[int, FunctionalSpec], ...]


def _c(*terms) -> Contrast:
    return tuple(terms)


def effects_to_contrasts(family: str, has_moc: bool, allow_cross_world: bool = False) -> dict[str, Contrast]:
    """Named effects as signed sums of functionals.

    ``N`` uses natural2 and refuses an intermediate confounder unless
    ``allow_cross_world`` is set (Z is then dropped by the caller).  ``RI``
    without Z reduces to natural2, which is the same functional there.
    """
    if family not in EFFECT_FAMILIES:
        raise UnknownEffect(f"unknown effect family {family!r}; expected one of {EFFECT_FAMILIES}")
    if family == "N":
        if has_moc and not allow_cross_world:
            raise FamilyRoleMismatch(
                "natural effects are not identified with an intermediate confounder; "
                "use RI or RT, or set allow_cross_world to drop Z"
            )
        return {
            "NDE": _c((1, N2(1, 0)), (-1, N2(0, 0))),
            "NIE": _c((1, N2(1, 1)), (-1, N2(1, 0))),
            "ATE": _c((1, N2(1, 1)), (-1, N2(0, 0))),
        }
    if family == "RI":
        if not has_moc:
            return {
                "RIDE": _c((1, N2(1, 0)), (-1, N2(0, 0))),
                "RIIE": _c((1, N2(1, 1)), (-1, N2(1, 0))),
            }
        return {
            "RIDE": _c((1, R4(1, 1, 0, 0)), (-1, R4(0, 0, 0, 0))),
            "RIIE": _c((1, R4(1, 1, 1, 1)), (-1, R4(1, 1, 0, 0))),
        }
    if not has_moc:
        raise FamilyRoleMismatch("recanting-twin effects need an intermediate confounder (moc)")
    return {
        "P1": _c((1, C3(1, 1, 1)), (-1, C3(0, 1, 1))),
        "P2": _c((1, R4(0, 1, 1, 1)), (-1, R4(0, 0, 1, 1))),
        "P3": _c((1, R4(0, 0, 1, 1)), (-1, R4(0, 0, 1, 0))),
        "P4": _c((1, C3(0, 0, 1)), (-1, C3(0, 0, 0))),
        "R": _c((1, C3(0, 1, 1)), (-1, R4(0, 1, 1, 1)), (1, R4(0, 0, 1, 0)), (-1, C3(0, 0, 1))),
        "ATE": _c((1, C3(1, 1, 1)), (-1, C3(0, 0, 0))),
    }


def functionals_in(table: dict[str, Contrast]) -> list[FunctionalSpec]:
    seen: dict[str, FunctionalSpec] = {}
    for terms in table.values():
        for _, spec in terms:
            seen.setdefault(spec.key, spec)
    return list(seen.values())


# Twin counterfactual means as functionals (valid under the cross-world
# independence conditions; the oracle checks each of them).
TWIN_FUNCTIONALS = {
    "S0": C3(1, 1, 1),
    "S1": C3(0, 1, 1),
    "S1'": R4(0, 1, 1, 1),
    "S2'": R4(0, 0, 1, 1),
    "S2''": R4(0, 0, 1, 1),
    "S3''": R4(0, 0, 1, 0),
    "S3": C3(0, 0, 1),
    "S4": C3(0, 0, 0),
}


def families_from(names: Sequence[str] | str) -> list[str]:
    if isinstance(names, str):
        names = [names]
    out = []
    for f in names:
        if f not in EFFECT_FAMILIES:
            raise UnknownEffect(f"unknown effect family {f!r}; expected one of {EFFECT_FAMILIES}")
        out.append(f)
    return out
