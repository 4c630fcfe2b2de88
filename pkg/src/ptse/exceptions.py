"""Exception and warning classes raised across the package."""

from __future__ import annotations


class PtseError(Exception):
    """Base class for all package errors."""


class DegenerateLikelihood(PtseError):
    """Every state assigns zero density to some observation."""


class NoConvergence(PtseError):
    """An iteration hit its cap before meeting tolerance.

    ``last`` carries the final iterate and ``residual`` its distance from the
    fixed point.
    """

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class EmptyCandidates(PtseError):
    pass


class OneSidedResiduals(PtseError):
    """All residuals fall on one side of zero; the quantile constraint has no solution."""


class SingularSystem(PtseError):
    pass


class MissingData(PtseError):
    pass


class ShapeMismatch(PtseError):
    pass


class NonFiniteLikelihood(PtseError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class BracketFailure(PtseError):
    pass


class ZeroDenominator(PtseError):
    pass


class MalformedDocument(PtseError):
    pass


class SchemaVersionMismatch(MalformedDocument):
    pass


class DataFileError(PtseError):
    """Problem reading a dataset file; message names the row and column."""


# warnings ------------------------------------------------------------------


class PtseWarning(UserWarning):
    pass


class StarvedStateWarning(PtseWarning):
    """A state carries no posterior mass; its transition row was reset to uniform."""


class DegenerateSampleWarning(PtseWarning):
    pass


class ConstraintFallbackWarning(PtseWarning):
    """The zero-quantile side constants were infeasible; a plain weighted KDE was used."""


class LikelihoodFloorWarning(PtseWarning):
    pass


class ConvergenceWarning(PtseWarning):
    pass


class SmallSampleWarning(PtseWarning):
    pass
