"""Exceptions raised across the fringe/urn packages.

They subclass the builtin exception a caller would naturally catch, so
``except ValueError`` still works for any bad-input condition.
"""


class InvalidParameterError(ValueError):
    """A scalar parameter is out of range (m < 2, unknown algorithm, ...)."""


class InvalidInputError(ValueError):
    """An input object is malformed or inconsistent with its companion."""


class InvalidStateError(RuntimeError):
    """The object cannot answer the query in its current state."""


class InvariantViolation(RuntimeError):
    """A structural invariant was broken; this always signals a bug."""


class PhaseMismatchError(ValueError):
    """A large-phase computation was requested for a small urn (m <= 59)."""


class NonContractiveError(ValueError):
    """Re(lambda) <= 1/2, so the smoothing map is not an L2 contraction."""


class NumericFailureError(ArithmeticError):
    """An iterative numeric method did not converge or degenerated."""


class ResourceLimitError(RuntimeError):
    """A request would exceed a configured resource budget."""


class ConfigurationError(ValueError):
    """Environment configuration is invalid."""
