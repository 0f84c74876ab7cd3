"""Exception hierarchy shared by all kpplab modules."""


class KppLabError(Exception):
    """Base class for every error raised by kpplab."""


class CoefficientDomainError(KppLabError, ValueError):
    """A coefficient that must be positive (g, psi, nu, eta) is not."""


class ConvergenceError(KppLabError):
    """An iterative solver stopped before reaching its tolerance.

    The last residual is kept on the exception so callers can decide whether
    to retry with a larger budget.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SearchError(KppLabError):
    """The minimiser of gamma(lambda)/lambda could not be bracketed."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class DegeneracyError(KppLabError):
    """A null space that should be one-dimensional looks defective."""


class InconsistentInputError(KppLabError, ValueError):
    """A solvability condition failed, so the inputs do not fit together."""


class ConsistencyError(KppLabError):
    """Two independent evaluations of one quantity disagree."""

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class BracketingError(KppLabError):
    """A root-finding bracket shows no sign change."""


class StabilityError(KppLabError):
    """A time step produced values outside the invariant region."""


class DomainTooSmallError(KppLabError):
    """The computational window is too narrow for the solution's support."""

    def __init__(self, message, suggested_width=None):
        super().__init__(message)
        self.suggested_width = suggested_width


class IllPosedConfigError(KppLabError, ValueError):
    """A parameter choice makes the evolution problem ill posed."""


class RelaxationError(KppLabError):
    """A relaxation towards a stationary or periodic state did not settle."""


class DataGapError(KppLabError, ValueError):
    """A fit window contains undefined samples."""


class ExplosionError(KppLabError):
    """A branching population exceeded its particle cap."""

    def __init__(self, message, time_reached=None, trial=None):
        super().__init__(message)
        self.time_reached = time_reached
        self.trial = trial


class ConfigError(KppLabError, ValueError):
    """A configuration value failed validation; the message names the field."""
