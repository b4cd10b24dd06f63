"""Effect reports: JSON serialization and a fixed-width table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1

# Row order per family; the decomposition lists components and their total.
FAMILY_ROWS = {
    "N": ("NDE", "NIE", "ATE"),
    "RI": ("RIDE", "RIIE"),
    "RT": ("P1", "P2", "P3", "P4", "R", "ATE"),
}
DECOMPOSITIONS = {
    "N": ("NDE", "NIE"),
    "RT": ("P1", "P2", "P3", "P4", "R"),
}


@dataclass
class EffectRow:
    family: str
    name: str
    estimate: float
    plugin: float
    se: float
    ci_lower: float
    ci_upper: float

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "name": self.name,
            "estimate": self.estimate,
            "plugin": self.plugin,
            "se": self.se,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
        }


@dataclass
class EffectReport:
    rows: list[EffectRow]
    decomposition: dict = field(default_factory=dict)
    falsification: dict | None = None
    warnings: list[str] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def row(self, name: str, family: str | None = None) -> EffectRow:
        for r in self.rows:
            if r.name == name and (family is None or r.family == family):
                return r
        raise KeyError(name)

    def names(self, family: str) -> list[str]:
        return [r.name for r in self.rows if r.family == family]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "effects": [r.to_dict() for r in self.rows],
            "decomposition": self.decomposition,
            "falsification": self.falsification,
            "warnings": list(self.warnings),
            "manifest": self.manifest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EffectReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        rows = [EffectRow(**r) for r in d["effects"]]
        return cls(rows, d.get("decomposition", {}), d.get("falsification"), list(d.get("warnings", [])),
                   d.get("manifest", {}), d["schema_version"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EffectReport":
        return cls.from_dict(json.loads(text))

    def to_table(self) -> str:
        return render_table(self)


def fmt3(x: float) -> str:
    s = f"{x:.3f}"
    return "0.000" if s == "-0.000" else s


def render_table(report: EffectReport) -> str:
    lines = []
    families = list(dict.fromkeys(r.family for r in report.rows))
    for fam in families:
        lines.append(f"[{fam}]")
        lines.append(f"{'Effect':<8}{'Estimate':>10}  95% CI")
        for r in report.rows:
            if r.family == fam:
                lines.append(f"{r.name:<8}{fmt3(r.estimate):>10}  ({fmt3(r.ci_lower)}, {fmt3(r.ci_upper)})")
        dec = report.decomposition.get(fam)
        if dec:
            comps = " + ".join(dec["components"])
            lines.append(f"decomposition: {comps} = {fmt3(dec['component_sum'])}; ATE = {fmt3(dec['ATE'])}")
        lines.append("")
    f = report.falsification
    if f:
        lines.append(f"falsification test, H0: R = 0: z = {f['statistic']:.3f}, p = {f['p_value']:.4f}")
        lines.append(f"  {f['decision']}")
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


def build_report(estimation, families, manifest: dict | None = None) -> EffectReport:
    """Collect an engine ``Estimation`` into ordered rows and summary blocks."""
    rows, decomposition = [], {}
    for fam in families:
        effects = estimation.effects[fam]
        for name in FAMILY_ROWS[fam]:
            e = effects[name]
            rows.append(EffectRow(fam, name, e.estimate, e.plugin, e.se, e.ci[0], e.ci[1]))
        if fam in DECOMPOSITIONS:
            comps = DECOMPOSITIONS[fam]
            decomposition[fam] = {
                "components": list(comps),
                "component_sum": sum(effects[c].estimate for c in comps),
                "ATE": effects["ATE"].estimate,
            }
    fals = estimation.falsification.to_dict() if estimation.falsification is not None else None
    warns = list(estimation.warnings)
    if "RT" in families and fals is None:
        warns.append("falsification test skipped: SE of R is zero")
    return EffectReport(rows, decomposition, fals, warns, manifest or {})


def write_report(report: EffectReport, path, fmt: str = "json") -> None:
    text = report.to_json() if fmt == "json" else report.to_table()
    Path(path).write_text(text, encoding="utf-8")
