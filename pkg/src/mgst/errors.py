"""Exception hierarchy shared by every engine."""


class MGSTError(Exception):
    """Base class for all design errors."""


class ConfigurationError(MGSTError, ValueError):
    """Invalid user input (bad dimensions, schema violations, root-count overflow)."""


class InvalidCovarianceError(ConfigurationError):
    """A covariance matrix is not symmetric positive definite."""


class ScheduleOrderError(ConfigurationError):
    """Information levels decrease between analyses."""


class InfeasibleDesignError(MGSTError):
    """A stage target cannot be met (no bracketing boundary exists)."""


class DegenerateLawError(MGSTError):
    """Delta approximation with a vanishing gradient."""


class InsufficientReplicatesError(MGSTError):
    """Monte Carlo population too small to resolve a stage quantile."""
