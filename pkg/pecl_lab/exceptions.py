"""Exception hierarchy for pecl-lab.

Every error raised by the library derives from ``PeclLabError``. The three
families below map onto CLI exit codes (see ``pecl_lab.cli.main``).
"""


class PeclLabError(Exception):
    """Base class for all pecl-lab errors."""

    error_type = "general_error"
    exit_code = 1


class ConfigError(PeclLabError):
    """Invalid configuration or command-line usage."""

    error_type = "config_error"


class DataError(PeclLabError):
    """Input data violates a precondition of an operation."""

    error_type = "data_error"
    exit_code = 2


class VerificationError(PeclLabError):
    """An internal consistency check failed."""

    error_type = "verification_error"
    exit_code = 3


# numeric core


class ZeroVectorError(DataError):
    """Raised when normalising a vector whose norm is at most 1e-12."""


class NonPositiveTemperatureError(DataError):
    """Raised when a softmax temperature is not strictly positive."""


class NonFiniteValueError(DataError):
    """Raised when NaN or Inf enters a public operation."""


class ShapeMismatchError(DataError):
    """Raised when aligned inputs disagree in shape."""


# pairing and losses


class LengthMismatchError(DataError):
    """Raised when label vectors have different lengths."""


class EmptyBatchError(DataError):
    """Raised when a batch holds fewer than two samples."""


class MissingEmbeddingsError(DataError):
    """Raised when embedding-based soft labels are requested without embeddings."""


class InvalidPositiveIndexError(DataError):
    """Raised when an InfoNCE positive index is out of range or equals the anchor."""


class EmptyPositiveSetError(DataError):
    """Raised when a SupCon positive set is empty or contains the anchor."""


# model


class MissingForwardCacheError(DataError):
    """Raised when backward is called without a cached forward pass."""


class EmptySplitError(DataError):
    """Raised when a train/validation split holds no locations."""


# dataset


class NoVisitsError(DataError):
    """Raised for a location without any observation records."""


class InsufficientLocationsError(DataError):
    """Raised when there are too few locations to populate every split."""


class CropTooLargeError(DataError):
    """Raised when a crop exceeds the raster dimensions."""


class ConstantBandError(DataError):
    """Raised (or logged) when a raster band has zero variance."""


class InvalidConfigError(ConfigError):
    """Raised when a generator or model configuration is invalid."""


class MalformedInputError(DataError):
    """Raised when an input file has rows that cannot be parsed."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors or [])


# evaluation


class KTooLargeError(DataError):
    """Raised when top-k is requested with k larger than the species count."""


class ZeroVarianceError(DataError):
    """Raised when a correlation input has zero variance."""


# verification


class SplitSafetyError(VerificationError):
    """Raised when two locations closer than eps ended up in different splits."""


class GradientCheckError(VerificationError):
    """Raised when an analytic gradient disagrees with finite differences."""
