"""Exception hierarchy for the daecf package.

Two error families matter to callers: data/validation problems
(:class:`ValidationError`) and numerical failures discovered while
filtering or training (:class:`NumericalError`).  The command-line
interface maps them to exit codes 2 and 3 respectively.
"""

from __future__ import annotations


class DaecfError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(DaecfError):
    """Input data or configuration failed validation."""


class ParseError(ValidationError):
    """A recording file could not be parsed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending row, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AlignmentError(ValidationError):
    """Sensor and ground-truth sequences have mismatched lengths."""


class RecordingTooShort(ValidationError):
    """A recording is shorter than the requested segment length."""


class FormatError(ValidationError):
    """A parameter file does not match the documented binary format."""


class NonMonotonicTime(ValidationError):
    """Timestamps are not strictly increasing."""


class DtTooLarge(ValidationError):
    """Sample interval exceeds the maximum (signals dropped samples)."""


class NumericalError(DaecfError):
    """A numerical invariant was violated during computation."""


class SingularInput(NumericalError):
    """Matrix to orthogonalize is numerically rank-deficient."""


class DegenerateGravity(NumericalError):
    """Updated gravity vector collapsed to near-zero length."""


class DegenerateTriad(NumericalError):
    """Gravity and the pseudo-reference direction are near-parallel."""


class NonFiniteActivation(NumericalError):
    """A network activation overflowed to inf or NaN."""


class NonFiniteLoss(NumericalError):
    """The training loss evaluated to inf or NaN."""


class GimbalLockWarning(UserWarning):
    """Euler extraction hit pitch = +/-90 deg; roll/yaw not unique."""
