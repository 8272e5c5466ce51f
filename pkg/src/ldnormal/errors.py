"""Exception types raised across the package."""


class ParameterError(ValueError):
    """A distribution or model parameter violates its admissible range."""


class PreconditionError(ParameterError):
    """A theorem or lemma precondition (for example theta < 1/2) does not hold."""


class InfeasibleFamilyError(ValueError):
    """Cumulant matching produced parameters outside the family's domain.

    ``diagnostics`` holds the raw (unprojected) solution and the list of
    violated conditions so callers can report or project them.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class AccuracyError(ArithmeticError):
    """A truncated PMF carries too much tail mass for the requested accuracy."""

    def __init__(self, message, bound=float("nan")):
        super().__init__(message)
        self.bound = bound


class BudgetError(RuntimeError):
    """Exact enumeration would exceed the configured configuration budget."""


class NumericalError(ArithmeticError):
    """A numerical solve did not meet its residual gate."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
