"""Exception types raised by the numerical routines."""


class StapError(Exception):
    """Base class for numerical failures (as opposed to bad arguments)."""


class IllConditionedPhaseError(StapError):
    """The density vanishes on a region cutting the anchor off from populated points."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class AmbiguousGaugeWarning(UserWarning):
    """Phase solved per nodal subdomain; the relative constants are a choice."""


class GridTooSmallError(StapError):
    def __init__(self, message, edge_density=None):
        super().__init__(message)
        self.edge_density = edge_density


class StepSizeError(StapError):
    pass


class ConvergenceError(StapError):
    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class ModeTruncationError(StapError):
    """More invariant modes were requested than the grid resolves."""


class GridMismatchError(ValueError):
    pass
