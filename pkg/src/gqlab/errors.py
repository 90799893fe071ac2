"""Exception hierarchy shared by every gqlab module."""


class GQLabError(Exception):
    """Base class for all library errors."""


class InvalidStructureError(GQLabError, ValueError):
    """A sampled complex structure or metric violates its invariants."""


class DomainError(GQLabError, ValueError):
    """An argument lies outside the admissible parameter range."""


class ConfigError(GQLabError, ValueError):
    """Inconsistent or malformed configuration (grid mismatch, bad preset, ...)."""


class ResolutionError(GQLabError, ValueError):
    """Grid too coarse for the requested finite-difference stencil."""


class AssemblyError(GQLabError, RuntimeError):
    """Internal consistency check on an assembled operator failed."""


class ConvergenceError(GQLabError, RuntimeError):
    """Iterative eigensolver did not reach the requested residual."""

    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class IllPosedWindowError(GQLabError, ValueError):
    """Counting-window edge sits on top of a computed eigenvalue."""


class InsufficientSpectrumError(GQLabError, ValueError):
    """Too few eigenvalues were computed for the requested report."""


class PreconditionError(GQLabError, ValueError):
    """Caller violated a documented precondition."""


class TruncationError(GQLabError, ValueError):
    """A truncated computational box is too small for the profile it holds."""
