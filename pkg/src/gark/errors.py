"""Exception hierarchy shared by every module."""


class GarkError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(GarkError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NonFinite(GarkError, ValueError):
    pass


class ParseError(GarkError, ValueError):
    pass


class ZeroWeight(GarkError, ValueError):
    def __init__(self, message, partition=None, index=None):
        super().__init__(message)
        self.partition = partition
        self.index = index


class NotSymmetric(GarkError, ValueError):
    pass


class NotSymplectic(GarkError, ValueError):
    pass


class NotConjugate(GarkError, ValueError):
    pass


class WeightsNotPalindromic(GarkError, ValueError):
    pass


class OddStageCount(GarkError, ValueError):
    pass


class NoConvergence(GarkError, RuntimeError):
    pass


class DimensionMismatch(GarkError, ValueError):
    pass


class StageSolveFailure(GarkError, RuntimeError):
    def __init__(self, message, group=None, residual=float("nan"), step=None):
        super().__init__(message)
        self.group = group
        self.residual = residual
        self.step = step
