"""Exception hierarchy shared by all protoshot modules."""

from __future__ import annotations


class ProtoshotError(Exception):
    """Base class for all errors raised by this package."""


# --- linear algebra ---------------------------------------------------------

class NonSquareError(ProtoshotError):
    """A square matrix was required."""


class NotSymmetricError(ProtoshotError):
    """Symmetry deviation exceeds the accepted tolerance."""


class NonFiniteError(ProtoshotError):
    """NaN or infinity found in numeric input."""


class EmptyInputError(ProtoshotError):
    """An operation received no data points."""


class DimensionMismatchError(ProtoshotError):
    """Vector or matrix dimensions do not agree."""


# --- generative world -------------------------------------------------------

class DegenerateWorldError(ProtoshotError):
    """A world covariance cannot be factorized within the PSD tolerance."""


# --- dataset ingestion and statistics ---------------------------------------

class ParseError(ProtoshotError):
    """Malformed embedding file. Carries the offending row/column when known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class RaggedRowsError(ParseError):
    """Rows of the embedding file have inconsistent widths."""


class NonFiniteValueError(ParseError):
    """The embedding file contains a NaN or infinite value."""


class SingleClassError(ProtoshotError):
    """At least two distinct classes are required."""


class DegenerateIntraClassVarianceError(ProtoshotError):
    """Within-class variance is (numerically) zero; the ratio is undefined."""


class ZeroTotalVarianceError(ProtoshotError):
    """All eigenvalues vanish; explained-variance ratios are undefined."""


# --- episodes ----------------------------------------------------------------

class InsufficientClassesError(ProtoshotError):
    """The source does not contain enough distinct classes for an episode."""


class InsufficientSamplesPerClassError(ProtoshotError):
    """A drawn class has fewer samples than supports plus queries require."""


# --- transforms ---------------------------------------------------------------

class DimensionTooLargeError(ProtoshotError):
    """Requested output dimension exceeds the embedding dimension."""


# --- bounds --------------------------------------------------------------------

class DegenerateDenominatorError(ProtoshotError):
    """All moments are zero; the accuracy bound is undefined."""


class InvalidDeltaError(ProtoshotError):
    """Confidence parameter must lie strictly between 0 and 1."""
