"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2), numerical
failures from :class:`NumericalError` (exit code 3) and resource guards from
:class:`ResourceLimitError` (exit code 4).
"""


class FastSmoothError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(FastSmoothError, ValueError):
    exit_code = 2


class DegenerateDimensionError(InputError):
    """A location dimension has zero extent or zero spread."""

    def __init__(self, dim: int, detail: str = "zero extent"):
        self.dim = dim
        super().__init__(f"location dimension {dim} is degenerate ({detail})")


class GridRangeError(InputError):
    """Points fall outside the range the grid was built for."""


class TableFormatError(InputError):
    """Malformed delimited input file."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericalError(FastSmoothError, ArithmeticError):
    exit_code = 3


class DeconvolutionOverflowError(NumericalError):
    """The gridding deconvolution factor is not representable."""

    def __init__(self, axis: int, frequency: int, tau: float):
        self.axis = axis
        self.frequency = frequency
        self.tau = tau
        super().__init__(
            f"deconvolution factor exp(k^2 tau) overflows at axis {axis}, "
            f"k={frequency} (tau={tau:.3e}); lower the accuracy or enlarge the FFT"
        )


class NoValidCandidateError(NumericalError):
    """Every bandwidth candidate produced an invalid GCV score."""


class UnidentifiableVarianceError(NumericalError):
    """All squared residuals are zero, so the variance scale is undefined."""


class EmptySurfaceError(NumericalError):
    """Every grid node was masked; nothing to fill from."""


class ResourceLimitError(FastSmoothError, MemoryError):
    exit_code = 4
