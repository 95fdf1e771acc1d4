"""Exception hierarchy shared by the whole package.

Every error class carries a distinct process exit code so the CLI can map
failures one-to-one onto shell-visible codes (click reserves 1 and 2 for its
own usage errors).
"""


class StuaError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidConfig(StuaError):
    exit_code = 3


class DegenerateGeometry(StuaError):
    """Two regions share coordinates, so an off-diagonal distance is zero."""

    exit_code = 4


class EmptyPeriod(StuaError):
    exit_code = 5


class DegenerateDegree(StuaError):
    """A row sum of A + I is nonpositive; symmetric normalization undefined."""

    exit_code = 6


class InsufficientHistory(StuaError):
    exit_code = 7


class MissingData(StuaError):
    exit_code = 8


class UnknownRegion(StuaError):
    exit_code = 9


class DuplicateCell(StuaError):
    exit_code = 10


class NonMonotonicTimestamps(StuaError):
    exit_code = 11


class NonFiniteLoss(StuaError):
    exit_code = 12


class UndefinedMetric(StuaError):
    exit_code = 13


class ShapeMismatch(StuaError):
    exit_code = 14


EXIT_CODES = {
    cls.__name__: cls.exit_code
    for cls in (
        InvalidConfig,
        DegenerateGeometry,
        EmptyPeriod,
        DegenerateDegree,
        InsufficientHistory,
        MissingData,
        UnknownRegion,
        DuplicateCell,
        NonMonotonicTimestamps,
        NonFiniteLoss,
        UndefinedMetric,
        ShapeMismatch,
    )
}
