"""Exception hierarchy shared by all modules."""


class MimeticError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(MimeticError, ValueError):
    """Invalid experiment or mapping configuration."""


class NumericalError(MimeticError, ArithmeticError):
    """A computation failed for numerical reasons."""


class GeometryError(NumericalError):
    """Singular or orientation-reversing mapping Jacobian."""


class GridQualityError(NumericalError):
    """Interpolation exactness constraints could not be met."""


class OperatorError(MimeticError, ValueError):
    """Inconsistent operator dimensions or weights."""


class NegativeDensityError(NumericalError):
    """Non-positive density or pressure encountered in a nonlinear model."""


class ShockError(NumericalError):
    """Requested time lies at or beyond the characteristic crossing time."""


class NoShockError(MimeticError, ValueError):
    """The wave profile never steepens into a shock."""


class IntegrationError(NumericalError):
    """Base class for time-integration failures."""


class MaxStepsError(IntegrationError):
    """The step budget was exhausted before the final time."""


class StepUnderflowError(IntegrationError):
    """The adaptive step size collapsed below the allowed minimum."""
