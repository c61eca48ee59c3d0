"""Exception hierarchy shared by all modules."""


class AtriaFitError(Exception):
    """Base class for all package errors."""


class InvalidGeometryError(AtriaFitError, ValueError):
    pass


class TopologyError(AtriaFitError):
    pass


class OrientationError(AtriaFitError):
    pass


class MissingRegionError(AtriaFitError, KeyError):
    pass


class InvertedElementError(AtriaFitError):
    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class DivergenceError(AtriaFitError):
    """Raised when the exponential strain energy exceeds its overflow cap."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class NonConvergenceError(AtriaFitError):
    def __init__(self, message, residual=None, time_index=None):
        super().__init__(message)
        self.residual = residual
        self.time_index = time_index


class UnloadingError(NonConvergenceError):
    pass


class FitError(AtriaFitError):
    pass


class ShapeError(AtriaFitError, ValueError):
    pass


class UndefinedScoreError(AtriaFitError, ValueError):
    pass


class FoldSizeError(AtriaFitError, ValueError):
    pass


class EmptySpaceError(AtriaFitError, ValueError):
    pass


class UndefinedIndicesError(AtriaFitError, ValueError):
    pass


class SparseRegionError(AtriaFitError):
    pass


class EmptyNroyError(AtriaFitError):
    pass


class DegenerateEnsembleError(AtriaFitError, ValueError):
    pass


class IdentifiabilityError(AtriaFitError, ValueError):
    pass


class DegenerateTestError(AtriaFitError, ValueError):
    pass


class ConfigError(AtriaFitError, ValueError):
    pass


class DependencyError(AtriaFitError):
    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class StageError(AtriaFitError):
    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage
