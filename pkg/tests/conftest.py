from pathlib import Path

import numpy as np
import pytest

from mediator import SCMSpec, VariableRoles, augment_zpi, make_folds, simulate
from mediator.dataset import MediationDataset

ROOT = Path(__file__).resolve().parents[1]
SCM_DIR = ROOT / "configs" / "scm"


@pytest.fixture(scope="session")
def confounded_scm():
    return SCMSpec.load(SCM_DIR / "confounded.toml")


@pytest.fixture(scope="session")
def small_data(confounded_scm):
    return simulate(confounded_scm, 400, seed=3)


@pytest.fixture(scope="session")
def small_aug(small_data):
    return make_folds(augment_zpi(small_data, seed=0), 3, seed=0)


@pytest.fixture
def roles():
    return VariableRoles(covariates=("w",), treatment="a", moc=("z",), mediators=("m",), outcome="y")


@pytest.fixture
def tiny(roles):
    rng = np.random.default_rng(0)
    n = 40
    a = np.repeat([0.0, 1.0], n // 2)
    cols = {"w": rng.normal(size=n), "a": a, "z": rng.integers(0, 2, n).astype(float),
            "m": rng.normal(size=n), "y": rng.normal(size=n)}
    return MediationDataset.from_columns(cols, roles)


# one line per acceptance criterion, printed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
