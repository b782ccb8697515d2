"""Exception hierarchy shared by all modules."""


class ConeCDError(Exception):
    """Base class for errors raised by conecd."""


class DomainError(ConeCDError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class ConfigError(ConeCDError, ValueError):
    """A configuration object or descriptor is malformed."""


class NumericalFailure(ConeCDError, RuntimeError):
    """A numerical procedure could not produce a trustworthy result."""
