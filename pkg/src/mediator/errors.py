"""Exception and warning types.

Validation problems (bad input, bad config) derive from ``ValidationError``;
failures of the numerical machinery derive from ``NumericalError``.  The CLI
maps the two families to exit codes 2 and 3.
"""


class MediatorError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MediatorError, ValueError):
    pass


class NumericalError(MediatorError, ArithmeticError):
    pass


# -- dataset ---------------------------------------------------------------

class MissingColumn(ValidationError):
    def __init__(self, name):
        super().__init__(f"column {name!r} not found")
        self.name = name


class NonNumericCell(ValidationError):
    def __init__(self, row, col, value=None):
        super().__init__(f"non-numeric value {value!r} at row {row}, column {col!r}")
        self.row, self.col = row, col


class MissingValue(ValidationError):
    def __init__(self, row, col):
        super().__init__(f"missing value at row {row}, column {col!r}")
        self.row, self.col = row, col


class RoleConflict(ValidationError):
    pass


class InvalidFoldCount(ValidationError):
    pass


# -- learners --------------------------------------------------------------

class ArityMismatch(ValidationError):
    pass


# -- riesz -----------------------------------------------------------------

class NonFiniteLoss(NumericalError):
    pass


class SingularGram(NumericalError):
    pass


class DivergedLoss(NumericalError):
    pass


# -- estimands -------------------------------------------------------------

class BadPolicy(ValidationError):
    pass


class MocPresent(ValidationError):
    pass


class MocAbsent(ValidationError):
    pass


class MissingZpi(ValidationError):
    pass


class UnknownEffect(ValidationError):
    pass


class FamilyRoleMismatch(ValidationError):
    pass


# -- engine ----------------------------------------------------------------

class LengthMismatch(ValidationError):
    pass


class MissingFunctional(ValidationError):
    pass


class NonFiniteEstimate(NumericalError):
    pass


class ZeroSE(NumericalError):
    pass


# -- oracle ----------------------------------------------------------------

class EquationEvalError(ValidationError):
    pass


class UnknownTwinName(ValidationError):
    pass


# -- warnings --------------------------------------------------------------

class StratumTooSmall(UserWarning):
    pass


class DegenerateTarget(UserWarning):
    pass


class PositivityWarning(UserWarning):
    pass


class CrossWorldWarning(UserWarning):
    pass
