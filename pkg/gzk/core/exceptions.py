from typing import Any, Dict, Optional


class GZKError(Exception):
    """Base exception for all laboratory errors."""
    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def describe(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details
        }


class GridError(GZKError):
    """Invalid grid resolution or box size."""


class RepresentationError(GZKError):
    """Operation applied to a Field in the wrong representation."""


class ParameterError(GZKError):
    """Operation parameter outside its admissible range."""


class ConvergenceError(GZKError):
    """Iterative solver did not converge or collapsed."""


class DomainError(GZKError):
    """Profile does not fit the periodic box (clipped or aliased)."""


class ConfigError(GZKError):
    """Malformed run configuration file."""


class SnapshotError(GZKError):
    """Unreadable or inconsistent Field snapshot."""


class ExperimentPreconditionError(GZKError):
    """Experiment preconditions failed before any computation."""
