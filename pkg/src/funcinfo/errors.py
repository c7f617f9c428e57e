"""Exception types shared across the package."""


class NotPositiveDefinite(ValueError):
    """Cholesky factorization hit a non-positive pivot."""


class StillNotPositiveDefinite(NotPositiveDefinite):
    """A regularized matrix is still not factorizable; the jitter is too small."""


class DimensionMismatch(ValueError):
    pass


class ClassOutOfRange(IndexError):
    pass


class InvalidPartition(ValueError):
    pass


class EmptyClass(ValueError):
    pass


class MissingAttribution(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


class ParseError(ValueError):
    """Malformed dataset file. Carries the 1-based row and column when known."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column
