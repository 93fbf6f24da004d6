"""Exception types shared across the package."""


class AdlError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(AdlError, ValueError):
    """Tensor shape or layer dimension mismatch."""


class DomainError(AdlError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ConfigError(AdlError, ValueError):
    """Invalid or inconsistent run configuration."""


class ProtocolError(AdlError, RuntimeError):
    """Violation of the message/schedule protocol (missing or duplicate
    message, version-law breach, accumulator overflow, deadlock)."""


class ComparisonError(AdlError, ValueError):
    """Traces cannot be compared (e.g. different update ranges)."""
