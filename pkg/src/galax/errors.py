"""Exception types raised across the package.

All errors derive from :class:`GalaxError` so callers can catch the whole
family; the CLI maps subfamilies onto exit codes.
"""


class GalaxError(Exception):
    """Base class for all package errors."""


class InvalidInputError(GalaxError):
    """Non-finite values, bad shapes, or out-of-domain arguments."""


class InvalidBandwidthError(InvalidInputError):
    """Fixed bandwidth is non-positive or non-finite."""


class InvalidKError(InvalidInputError):
    """Adaptive neighbour count outside [2, n-1]."""


class DegenerateGeometryError(GalaxError):
    """Duplicate coordinates make an adaptive cutoff distance zero."""


class DegenerateValuesError(GalaxError):
    """A statistic is undefined because the values are all equal."""


class NoNeighborsError(GalaxError):
    """A spatial weight matrix has no positive entries."""


class InsufficientBandsError(GalaxError):
    """An autocorrelation scan produced fewer than three usable bands."""


class ShapeError(InvalidInputError):
    """Feature dimensionality does not match the fitted model."""


class EmptyTrainingSetError(GalaxError):
    """No rows with positive sample weight were supplied."""


class FoldDegeneracyError(GalaxError):
    """A cross-validation fold has an empty or single-class training part."""


class TooFewSamplesError(GalaxError):
    """Fewer rows than the configured minimum local sample count."""


class NoViableModelError(GalaxError):
    """Every candidate configuration failed during model search."""


class BandwidthSearchError(GalaxError):
    """No bandwidth candidate could be evaluated."""


class UseSampledModeError(GalaxError):
    """Too many features for exact Shapley enumeration."""


class EngineError(GalaxError):
    """A per-location fit failed; the message names the location."""


class LocationRangeError(GalaxError):
    """A location index is outside [0, n)."""


class DataValidationError(GalaxError):
    """Ingested data is missing, malformed, or non-finite."""


class ArchiveError(GalaxError):
    """A results archive cannot be read or written."""


class UnsupportedVersionError(ArchiveError):
    """Archive schema major version is newer than this package supports."""


class IntegrityError(ArchiveError):
    """An archive member is missing or corrupted.

    ``member`` names the offending archive member.
    """

    def __init__(self, member: str, message: str = ""):
        self.member = member
        super().__init__(f"{member}: {message}" if message else member)
