"""Exception hierarchy shared across the package."""


class GfvError(Exception):
    """Base class for all domain errors raised by this package."""


# -- imaging --------------------------------------------------------------

class UnsupportedFormatError(GfvError):
    """Raster file has a pixel layout we do not accept."""


class CorruptImageError(GfvError):
    """Raster file exists but cannot be decoded."""


class InvalidDimensionsError(GfvError):
    """Requested image dimensions are out of range."""


class InvalidBlockSizeError(GfvError):
    """Block size does not fit the image."""


class RegionMismatchError(GfvError):
    """Source and destination regions have different shapes."""


class OutOfBoundsError(GfvError):
    """Region does not fit inside the image."""


class DegenerateCopyError(GfvError):
    """Copy-move with identical source and destination."""


# -- dataset --------------------------------------------------------------

class EmptyCorpusError(GfvError):
    """Corpus root yielded no documents."""


class NoCandidateZonesError(GfvError):
    """Document has too few tamper-safe blocks for the requested zones."""


class StratumTooSmallError(GfvError):
    """A (country, class) stratum is too small to split."""


class InsufficientDocumentsError(GfvError):
    """Not enough documents to sample the requested pairs."""


class ManifestFormatError(GfvError):
    """Manifest file is malformed or has an unknown format tag."""


# -- network --------------------------------------------------------------

class ShapeMismatchError(GfvError):
    """Input tensor shape does not match the configured network input."""


class LengthMismatchError(GfvError):
    """Feature vectors of different lengths were compared."""


class EmptyTrainingSetError(GfvError):
    """Training was requested with no pairs."""


class DivergenceDetectedError(GfvError):
    """Training loss became NaN/Inf; carries the trace collected so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class FingerprintMismatchError(GfvError):
    """Checkpoint was written for a different architecture."""


class CorruptCheckpointError(GfvError):
    """Checkpoint file is truncated or malformed."""


# -- calibration / evaluation ---------------------------------------------

class EmptyListError(GfvError):
    """A distance list that must be non-empty was empty."""


# -- cli -------------------------------------------------------------------

class UnknownCountryError(GfvError):
    """Country code is absent from the thresholds table."""
