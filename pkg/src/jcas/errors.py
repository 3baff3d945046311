"""Exception types shared across the package."""


class JcasError(Exception):
    """Base class for all package-specific errors."""


class DegenerateDirectionError(JcasError):
    """Surveillance direction lies (numerically) inside the span of the
    estimated user channels; the zero-forcing projection would only
    amplify noise."""


class SingularCovarianceError(JcasError):
    """Pilot observation covariance is singular or too ill-conditioned to
    solve reliably (condition number above the configured limit)."""


class RateModelError(JcasError):
    """Closed-form SINR denominator came out nonpositive, which signals
    inconsistent inputs rather than a physical operating point."""


class ConfigError(JcasError):
    """Configuration file error, annotated with the offending location."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, col {column or 1}: {message}"
        super().__init__(message)


class CampaignError(JcasError):
    """A campaign could not be run with the given configuration."""
