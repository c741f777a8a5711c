"""Semantic exception hierarchy for rotagrid.

Public functions raise these instead of bare ValueError/RuntimeError so that
callers (and the service layer) can map failures to meaningful responses.
"""


class RotagridError(Exception):
    """Base class for all rotagrid errors."""


class DimensionMismatchError(RotagridError, ValueError):
    """Shapes or variable counts of the inputs are inconsistent."""


class DegenerateInputError(RotagridError, ValueError):
    """Input is degenerate for the requested operation (e.g. zero variance)."""


class InvalidFrameError(RotagridError, ValueError):
    """Matrix is not an orthonormal frame within tolerance."""


class RetractionError(RotagridError, RuntimeError):
    """QR retraction failed because the perturbed frame lost column rank."""


class DomainError(RotagridError, ValueError):
    """Point lies outside the domain the operation is defined on."""


class RankDeficiencyError(RotagridError, RuntimeError):
    """Least-squares system is rank deficient; more data or a smaller degree
    is needed."""


class ConvergenceError(RotagridError, RuntimeError):
    """Iterative solver did not reach its target within the iteration cap."""

    def __init__(self, message, achieved_reduction=None, iterations=None):
        super().__init__(message)
        self.achieved_reduction = achieved_reduction
        self.iterations = iterations


class SaturationError(RotagridError, RuntimeError):
    """No basis function in the grid can be refined any further."""


class GridStateError(RotagridError, RuntimeError):
    """Grid is not in the state the operation requires (e.g. not fitted)."""


class DataFormatError(RotagridError, ValueError):
    """File or payload does not follow the expected format."""
