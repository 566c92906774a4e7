"""Exception hierarchy shared by all solver modules."""


class LLMError(Exception):
    """Base class for every error raised by llmaxwell."""


class ConfigurationError(LLMError, ValueError):
    """Invalid parameters or geometry that does not fit the grid."""


class GeometryError(LLMError):
    """The requested domain does not have the required topology."""


class ResolutionError(LLMError):
    """A field varies too fast for the grid (angle jump of at least pi)."""


class ChartError(LLMError):
    """The latitude left the spherical chart guard band."""


class DataError(LLMError, ValueError):
    """Malformed input data (non-positive distances, bad snapshot files)."""


class NonConvergenceError(LLMError):
    """An iterative method exhausted its budget.

    ``trace`` holds the residual history, ``residual`` the final value.
    """

    def __init__(self, message, residual=float("nan"), trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = list(trace or [])


class DivergedError(NonConvergenceError):
    """A fixed-point iteration stopped contracting.

    ``volume`` records |Omega| so callers can map the empirical smallness
    threshold.
    """

    def __init__(self, message, residual=float("nan"), trace=None, volume=float("nan")):
        super().__init__(message, residual, trace)
        self.volume = volume


class BracketError(LLMError):
    """The latitude solution left the certified band |xi| <= 2C/lambda."""

    def __init__(self, message, sup_xi=float("nan"), bound=float("nan")):
        super().__init__(message)
        self.sup_xi = sup_xi
        self.bound = bound


class StepRejected(LLMError):
    """A time step failed an acceptance check (energy growth, chart, solve)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
