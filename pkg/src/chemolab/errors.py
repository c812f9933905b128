"""Exception hierarchy shared by the chemolab modules."""


class ChemolabError(Exception):
    """Base class for all chemolab errors."""


class DivergedError(ChemolabError, ArithmeticError):
    """Integration produced a nonfinite state.

    ``last_t`` is the last time at which the solution was finite.
    """

    def __init__(self, message, last_t):
        super().__init__(f"{message} (last valid t = {last_t!r})")
        self.last_t = last_t


class OutOfRangeError(ChemolabError, ValueError):
    """A history or trajectory was queried outside its time window."""


class PoleError(ChemolabError, ZeroDivisionError):
    """The Holling response was evaluated at its pole s = -1/b."""


class NoSurvivalStateError(ChemolabError, ValueError):
    """A survival-state object was requested for parameters with am <= 1."""


class UnsupportedModelError(ChemolabError, ValueError):
    """The requested operation is not defined for this model family."""


class WrongCaseError(ChemolabError, ValueError):
    """Coefficients do not fall in the stability case the operation needs."""


class RootFindingError(ChemolabError, RuntimeError):
    """The characteristic-root search did not converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
