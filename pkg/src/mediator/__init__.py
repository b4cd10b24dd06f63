"""Cross-fitted one-step estimation of natural, randomized-interventional and
recanting-twin mediation effects, with a Monte Carlo SCM oracle."""

from .dataset import (
    AugmentedDataset,
    MediationDataset,
    VariableRoles,
    augment_zpi,
    load_csv,
    make_folds,
    positivity_diagnostics,
    write_csv,
)
from .engine import (
    EffectEstimate,
    FitArtifacts,
    assemble_eif,
    contrast,
    estimate_effects,
    falsification_test,
    onestep,
    run_program,
)
from .estimands import FunctionalSpec, RegressionProgram, effects_to_contrasts, program_for
from .learners import EnsembleSpec, LearnerSpec
from .oracle import SCMSpec, TruthTable, simulate, truth_counterfactual, truth_statistical, truth_table
from .policies import Policy, ShiftMap
from .report import EffectReport
from .riesz import RieszFunctionClass, fit_riesz, recursive_riesz, riesz_loss

__version__ = "0.1.0"

__all__ = [
    "AugmentedDataset",
    "EffectEstimate",
    "EffectReport",
    "EnsembleSpec",
    "FitArtifacts",
    "FunctionalSpec",
    "LearnerSpec",
    "MediationDataset",
    "Policy",
    "RegressionProgram",
    "RieszFunctionClass",
    "SCMSpec",
    "ShiftMap",
    "TruthTable",
    "VariableRoles",
    "assemble_eif",
    "augment_zpi",
    "contrast",
    "effects_to_contrasts",
    "estimate_effects",
    "falsification_test",
    "fit_riesz",
    "load_csv",
    "make_folds",
    "onestep",
    "positivity_diagnostics",
    "program_for",
    "recursive_riesz",
    "riesz_loss",
    "run_program",
    "simulate",
    "truth_counterfactual",
    "truth_statistical",
    "truth_table",
    "write_csv",
]
