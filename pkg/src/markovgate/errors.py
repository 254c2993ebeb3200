"""Exception types raised across the package."""


class MarkovgateError(Exception):
    """Base class for all markovgate errors."""


class DegenerateWindowError(MarkovgateError):
    """No sample points fall inside a kernel window."""


class DegenerateDesignError(MarkovgateError):
    """Local-linear normal equations are singular (fewer than 2 distinct
    points in the window, or determinant at the ridge floor)."""


class InsufficientSupportError(MarkovgateError):
    """Too few sample points carry positive weight for a test statistic."""


class FloorBreachError(MarkovgateError):
    """Too many density evaluations fell below the ratio-statistic floor."""


class CalibrationError(MarkovgateError):
    """Plug-in null calibration failed (non-positive mean or variance)."""


class NonstationaryFitError(MarkovgateError):
    """AR(1) fit produced a slope outside (0, 1)."""


class ZeroSpreadError(MarkovgateError):
    """Bandwidth selection on a sample with no spread."""


class ReplicateFailureError(MarkovgateError):
    """Too many Monte Carlo or bootstrap replicates failed."""


class ConfigError(MarkovgateError):
    """Malformed experiment configuration."""
