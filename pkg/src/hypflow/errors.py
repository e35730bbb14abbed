"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the documented domain of an operation."""


class ConfigError(ValueError):
    """A configuration violates a documented constraint."""


class ReductionError(RuntimeError):
    """Reduction into the fundamental domain did not terminate."""


class SingularConfigurationError(ArithmeticError):
    """A closed-form leaf construction hit a singular configuration."""


class SamplingError(RuntimeError):
    """A sampler could not produce usable samples."""


class FitQualityError(RuntimeError):
    """A regression did not meet its quality threshold.

    ``partial`` carries whatever was measured before the check failed.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ScaleError(RuntimeError):
    """An enumeration exceeded its size budget."""
