"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its documented status codes without inspecting messages.
"""


class TopoactError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class UsageError(TopoactError, ValueError):
    """Invalid argument combination (e.g. unsupported homology dimension)."""

    exit_code = 2


class DataError(TopoactError, ValueError):
    """Malformed, missing or inconsistent input data."""

    exit_code = 3


class SizeError(DataError):
    """Too few rows/points/samples for the requested operation."""


class CoverageError(DataError):
    """Requested layers or conditions are absent from a dataset."""


class FormatError(DataError):
    """Activation file does not follow the binary layout."""

    code = "format"


class BadMagicError(FormatError):
    code = "bad_magic"


class VersionMismatchError(FormatError):
    code = "version_mismatch"


class TruncatedPayloadError(FormatError):
    code = "truncated_payload"


class NumericalError(TopoactError, ValueError):
    """Degenerate numerical input (zero norm, constant vector, ...)."""

    exit_code = 4


class DomainError(NumericalError):
    """Argument outside the mathematical domain of the operation."""


class DegenerateInputError(NumericalError):
    pass


class PeakCountError(NumericalError):
    """A curve has fewer local maxima than requested."""


class StratificationError(DataError):
    """A split or fold would contain fewer than two members of a class."""
