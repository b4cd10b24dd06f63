"""Treatment policies and the shift maps built from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import BadPolicy

_RULES = ("constant", "natural", "threshold_shift")


@dataclass(frozen=True)
class Policy:
    """A modified treatment policy ``d(a, w)``.

    ``constant`` sets every unit to ``level``; ``natural`` keeps the observed
    treatment; ``threshold_shift`` returns ``max(a + delta, floor)`` for units
    with ``w[covariate] >= cutoff`` and ``a`` otherwise.
    """

    rule: str
    level: float | None = None
    covariate: str | None = None
    cutoff: float | None = None
    delta: float | None = None
    floor: float | None = None
    description: str = ""

    def __post_init__(self):
        if self.rule not in _RULES:
            raise BadPolicy(f"unknown policy rule {self.rule!r}; expected one of {_RULES}")
        if self.rule == "constant" and self.level is None:
            raise BadPolicy("constant policy needs a level")
        if self.rule == "threshold_shift":
            missing = [k for k in ("covariate", "cutoff", "delta") if getattr(self, k) is None]
            if missing:
                raise BadPolicy(f"threshold_shift policy missing {missing}")

    @classmethod
    def constant(cls, level, description=""):
        return cls("constant", level=float(level), description=description)

    @classmethod
    def natural(cls, description=""):
        return cls("natural", description=description)

    @classmethod
    def threshold_shift(cls, covariate, cutoff, delta, floor=None, description=""):
        return cls(
            "threshold_shift",
            covariate=covariate,
            cutoff=float(cutoff),
            delta=float(delta),
            floor=None if floor is None else float(floor),
            description=description,
        )

    @classmethod
    def from_dict(cls, d: Mapping) -> "Policy":
        d = dict(d)
        kind = d.pop("type", d.pop("rule", None))
        if kind == "constant":
            return cls.constant(d["level"], d.get("description", ""))
        if kind == "natural":
            return cls.natural(d.get("description", ""))
        if kind == "threshold_shift":
            try:
                return cls.threshold_shift(
                    d["covariate"], d["cutoff"], d["delta"], d.get("floor"), d.get("description", "")
                )
            except KeyError as e:
                raise BadPolicy(f"threshold_shift policy missing {e.args[0]!r}") from None
        raise BadPolicy(f"unknown policy type {kind!r}")

    def to_dict(self) -> dict:
        out = {"type": self.rule}
        for k in ("level", "covariate", "cutoff", "delta", "floor"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out

    @property
    def is_constant(self) -> bool:
        return self.rule == "constant"

    def __call__(self, a, covariates: Mapping[str, np.ndarray] | None = None):
        return apply_policy(self, a, covariates)


def apply_policy(p: Policy, a, w: Mapping[str, np.ndarray] | None = None):
    """Evaluate ``d(a, w)`` elementwise.

    ``w`` maps covariate names to values (scalars or arrays broadcastable
    against ``a``); only ``threshold_shift`` reads it.
    """
    a = np.asarray(a, dtype=float)
    if p.rule == "constant":
        return np.full_like(a, p.level, dtype=float) if a.ndim else float(p.level)
    if p.rule == "natural":
        return a.copy() if a.ndim else float(a)
    if w is None or p.covariate not in w:
        raise BadPolicy(f"policy needs covariate {p.covariate!r}")
    cov = np.asarray(w[p.covariate], dtype=float)
    shifted = a + p.delta
    if p.floor is not None:
        shifted = np.maximum(shifted, p.floor)
    out = np.where(cov >= p.cutoff, shifted, a)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ShiftMap:
    """Counterfactual edit of a row: set the treatment and/or swap in ``Z^pi``.

    ``set_treatment`` is evaluated on the *origin* treatment (the unit's
    natural value, or a fixed level when the engine indexes by origin), so
    nested shifts never compose.
    """

    set_treatment: Policy | None = None
    swap_z: bool = False

    @property
    def is_identity(self) -> bool:
        return self.set_treatment is None and not self.swap_z

    def describe(self) -> str:
        parts = []
        if self.set_treatment is not None:
            parts.append(f"A<-{self.set_treatment.rule}")
        if self.swap_z:
            parts.append("Z<-Zpi")
        return ",".join(parts) or "identity"


IDENTITY = ShiftMap()
