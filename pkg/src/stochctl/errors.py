"""Exception hierarchy shared by all modules."""


class StochCtlError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(StochCtlError, ValueError):
    """An input violates a structural invariant (shapes, stochasticity, feasibility)."""


class ParseError(StochCtlError, ValueError):
    """Malformed formula, automaton or configuration text."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class UnsupportedError(StochCtlError):
    """The request is well formed but outside what the engines can solve."""


class ConvergenceError(StochCtlError):
    """An iteration exhausted its budget without meeting its tolerance."""
