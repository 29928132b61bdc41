"""Exception types shared across the package."""


class FedAggError(Exception):
    """Base class for all package errors."""


class ConfigError(FedAggError, ValueError):
    """Invalid configuration or arguments that violate an operation's preconditions."""


class ShapeError(FedAggError, ValueError):
    """Array or parameter-vector dimensions do not match."""


class ParseError(FedAggError, ValueError):
    """Malformed input data (e.g. a bad JSONL line in strict mode)."""


class UndefinedMetricError(FedAggError, ValueError):
    """A metric has no defined value for the given inputs (e.g. AUROC with one class)."""
