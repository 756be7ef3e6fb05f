"""Exception types raised by the toolkit."""


class PerregError(Exception):
    """Base class for all toolkit errors."""


class IntegrationBlowupError(PerregError):
    """Non-finite values encountered during time integration.

    Attributes
    ----------
    time : float
        Time at which the blow-up was detected.
    columns : tuple of int
        Indices of the batch columns that became non-finite (empty for
        unbatched runs).
    """

    def __init__(self, message, time=None, columns=()):
        super().__init__(message)
        self.time = time
        self.columns = tuple(columns)


class BasisMismatchError(PerregError):
    """Two signals or operators with incompatible bases were combined."""


class CorruptedSignalError(PerregError):
    """A signal failed its conjugate-symmetry check when evaluated as real."""


class NotStableError(PerregError):
    """(I - A_hat) is singular to working precision; check exponential
    stability of the plant before building steady-state operators."""


class UnsolvableRegulationError(PerregError):
    """A steady-state equation P u = y could not be solved to tolerance."""

    def __init__(self, message, index=None, residual=None):
        super().__init__(message)
        self.index = index
        self.residual = residual


class NothingToTrackError(PerregError):
    """All reference and disturbance signals vanish; feedback synthesis has
    nothing to regulate."""


class SurjectivityError(PerregError):
    """The steady-state operator is rank deficient at truncation level, so
    the robust design's surjectivity hypothesis fails."""


class YNRangeError(PerregError):
    """The retained output subspace is not contained in the range of the
    steady-state operator at truncation level."""


class EstimateUnavailableError(PerregError):
    """The reduced system defining the asymptotic error estimate is
    singular."""


class AllUnstableError(PerregError):
    """No gain in the supplied grid stabilizes the closed loop.

    Attributes
    ----------
    table : list
        The full (epsilon, spectral radius, max imag part) tuning table.
    """

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table
