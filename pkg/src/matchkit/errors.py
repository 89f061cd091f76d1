"""Exception hierarchy. The CLI maps these onto exit codes."""


class MatchkitError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ValidationError(MatchkitError, ValueError):
    """Bad model input: malformed structure, measure or policy."""

    exit_code = 2


class UnsupportedKindError(ValidationError):
    """Operation not defined for this kind of structure (e.g. hypergraph)."""


class NotStableError(ValidationError):
    """Measure lies outside the region an operation requires."""


class NumericError(MatchkitError, ArithmeticError):
    """Linear solve failed, residual too large, or similar."""

    exit_code = 3
