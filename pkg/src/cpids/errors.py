"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`CpidsError`. The four
second-level classes map onto the CLI exit codes.
"""


class CpidsError(Exception):
    exit_code = 5


class ConfigError(CpidsError):
    exit_code = 2


class ValidationError(CpidsError):
    exit_code = 3


class DataError(CpidsError):
    exit_code = 4


# ingest
class MissingColumn(DataError):
    pass


class MalformedRow(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyFile(DataError):
    pass


class CadenceViolation(DataError):
    pass


class OverlapSameClass(DataError):
    pass


class UnknownLabel(DataError):
    pass


# features
class NoNormalTraffic(DataError):
    pass


class InsufficientCycles(DataError):
    pass


class TimestampMismatch(DataError):
    pass


class AllConstant(DataError):
    pass


class UnknownView(ValidationError):
    pass


# partitioning
class TooFewEvents(DataError):
    pass


class ClassTooSmall(DataError):
    pass


# transforms and models
class DegenerateColumn(DataError):
    pass


class TooFewMinority(DataError):
    pass


class SingleClass(DataError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


# evaluation
class LengthMismatch(ValidationError):
    pass


class NoEventsForClass(DataError):
    pass


class BundleVersionError(DataError):
    pass
