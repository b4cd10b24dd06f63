import json

import numpy as np
import pytest

from mediator import SCMSpec, TruthTable, simulate, truth_counterfactual, truth_statistical, truth_table
from mediator.errors import EquationEvalError, MocPresent, UnknownTwinName, ValidationError
from mediator.oracle import TWINS

P0, P1 = 0.2, 0.6

# Z ~ Bern(0.2 + 0.4 A), M = A + Z + N(0,1), Y = A + Z + M + Z M + N(0,1)
BERN_SCM = {
    "seed": 1,
    "W": [{"name": "W", "eq": "U", "noise": {"dist": "normal"}}],
    "A": {"name": "A", "eq": "U < 0.5", "noise": {"dist": "uniform"}},
    "Z": [{"name": "Z", "eq": "U < 0.2 + 0.4 * A", "noise": {"dist": "uniform"}}],
    "M": [{"name": "M", "eq": "A + Z + U", "noise": {"dist": "normal"}}],
    "Y": {"name": "Y", "eq": "A + Z + M + Z * M + U", "noise": {"dist": "normal"}},
}


def _p(a):
    return P1 if a else P0


def analytic(a_y, zy, a_m, zm):
    """E[Y(a_y, Zy, M(a_m, Zm))]; a Z source is (kind, arm) and equal sources are the same draw."""
    ez_y, ez_m = _p(zy[1]), _p(zm[1])
    # E[Zy Zm] is E[Z] when both are the unit's own Z in the same arm
    if zy == zm:
        ezz = ez_y
    elif zy[0] == "Z" and zm[0] == "Z":
        # own Z(0) and Z(1) share their uniform: Z(0) = 1 implies Z(1) = 1
        ezz = P0
    else:
        ezz = ez_y * ez_m
    return a_y + ez_y + a_m + ez_m + a_m * ez_y + ezz


@pytest.fixture(scope="module")
def scm():
    return SCMSpec.from_dict(BERN_SCM)


def test_twins_match_analytic(scm):
    table = truth_table(scm, "RT", draws=400_000, seed=7)
    for name, (ay, zy, am, zm) in TWINS.items():
        want = analytic(ay, zy, am, zm)
        assert abs(table[name] - want) <= 4 * table.se[name] + 1e-12, name
    # R = Var Z(1) - Var Z(0) through the Z M term
    assert table["R"] == pytest.approx(P1 * (1 - P1) - P0 * (1 - P0), abs=4 * table.se["R"] + 1e-3)


def test_randomized_interventional_truth(scm):
    table = truth_table(scm, "RI", draws=400_000, seed=8)

    def r4(a1, a2, a3, a4):
        return a1 + _p(a2) + a3 + _p(a4) + a3 * _p(a2) + _p(a2) * _p(a4)

    assert table["RIDE"] == pytest.approx(r4(1, 1, 0, 0) - r4(0, 0, 0, 0), abs=4 * table.se["RIDE"])
    assert table["RIIE"] == pytest.approx(r4(1, 1, 1, 1) - r4(1, 1, 0, 0), abs=4 * table.se["RIIE"])


def test_statistical_functional_matches_counterfactual(scm):
    for key in ("C3(0,1,1)", "R4(0,0,1,0)"):
        v_cf, se_cf = truth_counterfactual(scm, key, draws=200_000, seed=2)
        v_st, se_st = truth_statistical(scm, key, draws=200_000, seed=3)
        assert abs(v_cf - v_st) <= 4 * np.hypot(se_cf, se_st)


def test_natural_effects_without_z():
    d = {k: v for k, v in BERN_SCM.items() if k != "Z"}
    d["M"] = [{"name": "M", "eq": "A + U", "noise": {"dist": "normal"}}]
    d["Y"] = {"name": "Y", "eq": "A + M + A * M + U", "noise": {"dist": "normal"}}
    scm = SCMSpec.from_dict(d)
    t = truth_table(scm, "N", draws=200_000, seed=4)
    # Y(1, M(0)) - Y(0, M(0)) = 1 + M(0); E M(0) = 0; NIE = 2 E[M(1) - M(0)] = 2
    assert t["NDE"] == pytest.approx(1.0, abs=4 * t.se["NDE"] + 1e-9)
    assert t["NIE"] == pytest.approx(2.0, abs=4 * t.se["NIE"] + 1e-9)
    assert t["NDE"] + t["NIE"] == pytest.approx(t["ATE"], abs=1e-9)
    v, _ = truth_statistical(scm, "N2(1,0)", draws=100_000, seed=5)
    assert v == pytest.approx(1.0, abs=0.03)


def test_natural_statistical_refuses_z(scm):
    with pytest.raises(MocPresent):
        truth_statistical(scm, "N2(1,0)", draws=10_000)


def test_simulate_is_seeded(scm):
    a, b = simulate(scm, 50, seed=3), simulate(scm, 50, seed=3)
    for c in a.roles.columns():
        np.testing.assert_array_equal(a.columns[c], b.columns[c])
    assert set(np.unique(a.z)) <= {0.0, 1.0}


def test_unknown_twin(scm):
    with pytest.raises(UnknownTwinName):
        truth_counterfactual(scm, "S9", draws=10_000)


def test_too_few_draws(scm):
    with pytest.raises(ValidationError):
        truth_counterfactual(scm, "S0", draws=100)


@pytest.mark.parametrize("expr", ["import os", "W.__class__", "open('x')", "Q + 1"])
def test_bad_equations_rejected(expr):
    d = json.loads(json.dumps(BERN_SCM))
    d["Y"]["eq"] = expr
    with pytest.raises(EquationEvalError):
        SCMSpec.from_dict(d)


def test_scm_dict_round_trip(scm):
    again = SCMSpec.from_dict(scm.to_dict())
    a, b = simulate(scm, 30, seed=1), simulate(again, 30, seed=1)
    np.testing.assert_array_equal(a.y, b.y)


def test_truth_table_round_trip(tmp_path, scm):
    t = truth_table(scm, "RT", draws=10_000, seed=1)
    t.save(tmp_path / "t.json")
    back = TruthTable.load(tmp_path / "t.json")
    assert back.values == t.values and back.se == t.se and back.family == "RT"


def test_shipped_fixtures_have_expected_structure():
    from conftest import SCM_DIR
    null = truth_table(SCMSpec.load(SCM_DIR / "null_az.toml"), "RT", draws=200_000, seed=1)
    assert abs(null["R"]) <= 3 * null.se["R"] + 1e-12
    nomy = truth_table(SCMSpec.load(SCM_DIR / "no_my.toml"), "RT", draws=200_000, seed=1)
    for k in ("P3", "P4"):
        assert abs(nomy[k]) <= 3 * nomy.se[k] + 1e-12
