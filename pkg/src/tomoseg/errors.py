"""Exception types shared across the toolkit."""


class TomosegError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(TomosegError, ValueError):
    """An argument is outside its documented domain."""


class DimensionMismatchError(TomosegError):
    """Stated geometry disagrees with the data actually present."""


class UnsupportedFormatError(TomosegError):
    """Input file uses a feature outside the supported subset."""


class BoundsError(TomosegError):
    """A region or coordinate falls outside the parent volume."""


class DegenerateHistogramError(TomosegError):
    """Intensity histogram has no spread where spread is required."""


class InfeasibleClusterCountError(TomosegError):
    """Fewer distinct data values than requested clusters."""


class ConditioningError(TomosegError):
    """A linear system is singular or too ill-conditioned to trust."""


class CoordinateError(TomosegError):
    """A training-table coordinate lies outside its slice."""


class EmptyRegionError(TomosegError):
    """An operation needs unmasked voxels and found none."""


class RangeOverlapError(TomosegError):
    """Intensity ranges that must be disjoint overlap."""


class UndefinedRocError(TomosegError):
    """ROC needs both label values present."""


class ConfigError(TomosegError):
    """A declarative run configuration failed validation."""
