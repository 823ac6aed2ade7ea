"""
Exception hierarchy for the reliability toolkit.

Validation errors map to exit code 1 on the command line, computation
errors to exit code 2.
"""


class TopicReliabilityError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(TopicReliabilityError, ValueError):
    """Input, configuration or precondition violation."""


class CorpusFormatError(ValidationError):
    """A corpus file could not be parsed."""


class ConfigError(ValidationError):
    """A run configuration is incomplete or inconsistent."""


class ComputationError(TopicReliabilityError):
    """A numerical procedure failed on valid input."""


class ReliabilityUndefinedError(ComputationError):
    """A coefficient has a zero denominator or a constant item."""


class FactorFitError(ComputationError):
    """The single-factor solver cannot run on the given covariance."""


class BootstrapError(ComputationError):
    """Too many bootstrap resamples failed."""
