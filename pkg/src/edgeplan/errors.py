"""Exception hierarchy shared across the package."""


class EdgeplanError(Exception):
    """Base class for all errors raised by this package."""


class NetworkError(EdgeplanError):
    """Malformed or inconsistent network description."""


class PlanError(EdgeplanError):
    """Compression plan incompatible with the network it targets."""


class OracleError(EdgeplanError):
    """Accuracy oracle failed or returned an unusable value."""


class SearchError(EdgeplanError):
    """Search aborted; carries the episode trace collected so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class ConfigError(EdgeplanError):
    """Invalid run configuration."""
