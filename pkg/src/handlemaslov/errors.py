"""Exception hierarchy shared by all modules."""


class ParameterError(ValueError):
    """A construction parameter is outside its admissible range."""


class ConstructionError(ValueError):
    """An object cannot be built with the requested properties."""


class NumericError(ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""


class NonConvergenceError(NumericError):
    """Adaptive refinement hit its depth limit."""

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class RefinementNeeded(NumericError):
    """Frame transport lost rank; the step between samples is too large."""


class UnsupportedPointError(ValueError):
    """Evaluation requested at a point where the structure is not implemented."""


class GluingError(RuntimeError):
    """Volume-form phases disagree across a junction."""

    def __init__(self, message, mismatches=None):
        super().__init__(message)
        self.mismatches = mismatches or []


class SearchError(RuntimeError):
    """Parameter search found no admissible value."""
