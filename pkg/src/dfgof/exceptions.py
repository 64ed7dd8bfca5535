"""Exception and warning classes raised by dfgof."""


class DfgofError(Exception):
    """Base class for all dfgof errors."""


class DimensionMismatch(DfgofError, ValueError):
    pass


class InvalidModel(DfgofError, ValueError):
    """Cell probabilities are not a valid discrete distribution."""


class DegenerateModel(InvalidModel):
    pass


class DegenerateGeometry(DfgofError, ValueError):
    """The vectors defining an operator do not span the required subspace."""


class NonOrthogonalInputs(DfgofError, ValueError):
    pass


class ProvenanceMismatch(DfgofError, ValueError):
    """Objects built for different models or anchors were combined."""


class EmptyPooledCell(DfgofError, ValueError):
    pass


class DomainError(DfgofError, ValueError):
    pass


class DegenerateScore(DfgofError, ValueError):
    pass


class NoConvergence(DfgofError, RuntimeError):
    """Score equation was not solved; ``report`` holds solver diagnostics."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class ConditioningWarning(UserWarning):
    pass


class SmallCellWarning(UserWarning):
    pass
