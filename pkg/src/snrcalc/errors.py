"""Exception types shared across the package."""


class SnrCalcError(Exception):
    """Base class for all package errors."""


class DimensionError(SnrCalcError, ValueError):
    """Operands have incompatible horizons or shapes."""


class DomainError(SnrCalcError, ValueError):
    """Numeric argument outside the mathematical domain of an operation."""


class PreconditionError(SnrCalcError, ValueError):
    """Operation invoked outside its stated validity region (e.g. wrong s range)."""


class TraceError(SnrCalcError, ValueError):
    """Sample path violates causality or consistency requirements."""


class ConfigError(SnrCalcError, ValueError):
    """Invalid configuration key, value, or unit string."""
