"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid user-supplied parameter, shape, or configuration value."""


class NumericalError(RuntimeError):
    """A linear-algebra step failed: singular matrix, covariance not PD, ..."""
