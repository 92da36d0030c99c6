"""Exception types shared across the package."""


class ConsolError(Exception):
    """Base class for package errors."""


class DomainError(ConsolError):
    """An activation argument fell outside the symbol's admissible domain."""


class StructureError(ConsolError):
    """A network structure is internally inconsistent (e.g. a used
    multiplication neuron with no inputs)."""


class ShapeError(ConsolError):
    """Vector/matrix dimensions do not match the declared layer sizes."""


class ConsistencyError(ConsolError):
    """Two independent computations of the same quantity disagree beyond
    tolerance."""


class DegenerateError(ConsolError):
    """A statistic is undefined for the given data (zero variance, all
    derivatives below guard, ...)."""


class EpisodeAborted(ConsolError):
    """A search episode exhausted its constraint-retry budget."""
