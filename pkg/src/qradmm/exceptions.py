"""Exception types raised across the package."""


class QradmmError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(QradmmError):
    """Two arrays that must share a dimension do not."""


class NonFiniteEntry(QradmmError):
    """An input array contains NaN or infinity."""


class TauOutOfRange(QradmmError):
    """Quantile level outside the open interval (0, 1)."""


class ConcavityTooLarge(QradmmError):
    """SCAD/MCP concavity parameter too small for the given quadratic
    weight; the scalar prox objective would be nonconvex."""


class ProjectionNotConverged(QradmmError):
    """Polyhedral projection did not reach the requested KKT tolerance.

    Carries the final KKT residual as ``kkt_residual``.
    """

    def __init__(self, msg, kkt_residual):
        super().__init__(msg)
        self.kkt_residual = kkt_residual


class InfeasiblePolyhedron(QradmmError):
    """The constraint set {w: Cw >= d, Ew = f} appears to be empty."""


class PartitionNotFound(QradmmError):
    """No variable split satisfies the block-orthogonality condition
    required for the extended sweep to be provably convergent."""


class SingularNormalMatrix(QradmmError):
    """The coefficient normal matrix is not positive definite even after
    diagonal jitter."""


class TooManyPartitions(QradmmError):
    """Requested more data shards than observations."""


class UnsupportedPenalty(QradmmError):
    """Penalty family not supported by the requested solver."""


class MatchedAccuracyUnreachable(QradmmError):
    """Timing comparison aborted: the solvers' final objectives could not
    be matched to the required relative accuracy."""


class ParseError(QradmmError):
    """A text input failed to parse; carries 1-based ``line`` and ``column``."""

    def __init__(self, msg, line, column=None):
        super().__init__(msg)
        self.line = line
        self.column = column


class EmptyFile(QradmmError):
    """An input file contains no data rows."""


class SpecDimensionMismatch(QradmmError):
    """A constraint specification references coefficients beyond the
    problem dimension, or rows of inconsistent width."""


class UnknownKey(QradmmError):
    """A constraint specification line uses an unrecognized keyword."""
