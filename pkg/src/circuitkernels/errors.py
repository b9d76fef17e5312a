"""Exception types shared across the package.

The CLI maps these onto stable exit codes: format errors → 2, structural
precondition violations → 3, resource bounds → 4.
"""


class CircuitError(Exception):
    """Base class for all package errors."""


class FormatError(CircuitError):
    """Malformed file or in-memory description (bad ids, shapes, JSON)."""


class InvalidAssignmentError(CircuitError):
    """An assignment is out of the domain's range or has the wrong length."""


class StructuralError(CircuitError):
    """A structural precondition (smoothness, decomposability, ...) failed."""


class IncompatibleError(StructuralError):
    """Two circuits (or a kernel and a circuit pair) do not align."""


class DegenerateEvidenceError(StructuralError):
    """Evidence with zero probability mass."""


class PositivityError(StructuralError):
    """A strictly-positive distribution was required but a zero was hit."""


class ResourceBoundError(CircuitError):
    """An enumeration or compilation exceeded the configured state cap."""
