import pytest

from mediator import FunctionalSpec, Policy, effects_to_contrasts, program_for
from mediator.errors import FamilyRoleMismatch, MissingZpi, MocAbsent, MocPresent, UnknownEffect
from mediator.estimands import (
    TWIN_FUNCTIONALS,
    families_from,
    functionals_in,
    program_coupled3,
    program_natural2,
    program_randomized4,
)

POL = (Policy.constant(0), Policy.constant(1))


def _net(table, name):
    out = {}
    for sign, spec in table[name]:
        out[spec.key] = out.get(spec.key, 0) + sign
    return {k: v for k, v in out.items() if v}


def test_rt_components_telescope_to_ate():
    t = effects_to_contrasts("RT", has_moc=True)
    total = {}
    for name in ("P1", "P2", "P3", "P4", "R"):
        for k, v in _net(t, name).items():
            total[k] = total.get(k, 0) + v
    assert {k: v for k, v in total.items() if v} == _net(t, "ATE")


def test_n_components_telescope_to_ate():
    t = effects_to_contrasts("N", has_moc=False)
    total = {}
    for name in ("NDE", "NIE"):
        for k, v in _net(t, name).items():
            total[k] = total.get(k, 0) + v
    assert {k: v for k, v in total.items() if v} == _net(t, "ATE")


def test_ri_has_no_ate_claim():
    t = effects_to_contrasts("RI", has_moc=True)
    assert set(t) == {"RIDE", "RIIE"}


def test_remainder_matches_twin_contrast():
    # R = S1 - S1' + S2' - S2'' + S3'' - S3 with S2' and S2'' sharing a functional
    t = effects_to_contrasts("RT", has_moc=True)
    tw = TWIN_FUNCTIONALS
    want = {}
    for sign, name in [(1, "S1"), (-1, "S1'"), (1, "S2'"), (-1, "S2''"), (1, "S3''"), (-1, "S3")]:
        want[tw[name].key] = want.get(tw[name].key, 0) + sign
    assert _net(t, "R") == {k: v for k, v in want.items() if v}


def test_family_role_checks():
    with pytest.raises(FamilyRoleMismatch):
        effects_to_contrasts("N", has_moc=True)
    assert "NDE" in effects_to_contrasts("N", has_moc=True, allow_cross_world=True)
    with pytest.raises(FamilyRoleMismatch):
        effects_to_contrasts("RT", has_moc=False)
    with pytest.raises(UnknownEffect):
        effects_to_contrasts("PSE", has_moc=True)
    with pytest.raises(UnknownEffect):
        families_from(["RT", "X"])


def test_ri_without_moc_uses_natural():
    t = effects_to_contrasts("RI", has_moc=False)
    assert all(s.kind == "natural2" for terms in t.values() for _, s in terms)


def test_program_shapes():
    p = program_randomized4(0, 1, 1, 0, POL)
    assert [s.groups for s in p.steps] == [("A", "Z", "M", "W"), ("A", "M", "W"), ("A", "Z", "W"), ("A", "W")]
    sh = p.shifts()
    assert sh[0].swap_z and not any(s.swap_z for s in sh[1:])
    assert [s.set_treatment.level for s in sh] == [0, 1, 1, 0]
    assert p.needs_zpi and p.origin_free
    c = program_coupled3(1, 0, 1, POL)
    assert [s.set_treatment.level for s in c.shifts()] == [1, 1, 0]
    assert not c.needs_zpi
    nat = program_natural2(1, 0, POL)
    assert [s.set_treatment.level for s in nat.shifts()] == [1, 0]
    assert len(p.describe()) == 5


def test_program_errors():
    with pytest.raises(MocPresent):
        program_natural2(1, 0, POL, has_moc=True)
    with pytest.raises(MocAbsent):
        program_coupled3(1, 0, 1, POL, has_moc=False)
    with pytest.raises(MissingZpi):
        program_randomized4(1, 1, 1, 1, POL, has_zpi=False)
    with pytest.raises(ValueError):
        FunctionalSpec("coupled3", (1, 0))


def test_spec_keys_round_trip():
    for f in functionals_in(effects_to_contrasts("RT", True)) + functionals_in(effects_to_contrasts("N", False)):
        assert FunctionalSpec.parse(f.key) == f
        assert program_for(f, POL, has_moc=f.kind != "natural2").spec == f


def test_mtp_program_not_origin_free():
    pol = (Policy.natural(), Policy.threshold_shift("w", 0, 1))
    assert not program_coupled3(1, 1, 1, pol).origin_free
