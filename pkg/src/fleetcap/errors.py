"""Exception and warning types shared across the package.

Two fatal families: ValidationError (a value breaks a domain invariant)
and ParseError (a file could not be read). The CLI maps them to distinct
exit codes. Data-quality issues that should not stop a batch run are
Python warnings instead.
"""


class FleetcapError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FleetcapError):
    """A value violates a documented invariant."""


class ParseError(FleetcapError):
    """A file or stream could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvalidPower(ValidationError):
    """A power reading is negative, non-finite, or above the sanity ceiling."""


class WrongGcdCount(ValidationError):
    """A sample does not carry exactly one reading per GCD."""


class InvalidJob(ValidationError):
    """A job record is malformed (zero-length interval, node-count mismatch)."""


class EmptyProjectId(ValidationError):
    """A project id has no leading alphabetic run to derive a domain from."""


class OutOfRange(ValidationError):
    """A value falls outside its documented closed range."""


class CapBelowIdle(ValidationError):
    """A power cap at or below idle power cannot be met by throttling."""


class EmptyGrid(ValidationError):
    """A characterization grid has no points."""


class MissingCapRow(ValidationError):
    """A characterization table has no row for the requested cap."""


class UnknownDomain(ValidationError):
    """A projection filter names a domain absent from the decomposition."""


class UnknownSize(ValidationError):
    """A projection filter names a size class absent from the decomposition."""


class InvalidSpec(ValidationError):
    """A synthetic-workload spec is internally inconsistent."""


class UsageError(FleetcapError):
    """Bad command-line usage."""


class DataQualityWarning(UserWarning):
    """Base class for non-fatal data-quality reports."""


class DanglingAllocationWarning(DataQualityWarning):
    """An allocation row references a job id absent from the scheduler log."""


class OverlappingJobsWarning(DataQualityWarning):
    """Two jobs claim the same node at the same time."""


class EnergyIdentityWarning(DataQualityWarning):
    """A characterization row's energy column disagrees with power x runtime."""
