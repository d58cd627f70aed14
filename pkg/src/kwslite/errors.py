"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes (see cli.py): usage problems exit 1,
data/format problems exit 2, numeric failures exit 3.
"""


class KwsError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(KwsError):
    """Dimension mismatch. The message names the offending axis or layer."""

    def __init__(self, message: str, axis: str | None = None, layer: str | None = None):
        super().__init__(message)
        self.axis = axis
        self.layer = layer


class AudioFormatError(KwsError):
    """Input audio is not mono 16-bit PCM at the supported sample rate."""


class InsufficientAudioError(KwsError):
    """Signal is shorter than one analysis window."""


class InfeasibleBudgetError(KwsError):
    """No feature-map count satisfies the requested parameter cap."""


class ModelFormatError(KwsError):
    """Base class for model-file parsing failures."""


class BadMagicError(ModelFormatError):
    """File does not start with the model container magic."""


class UnsupportedVersionError(ModelFormatError):
    """Model container version is not supported by this reader."""


class TruncatedPayloadError(ModelFormatError):
    """Weight payload is shorter or longer than the manifest requires."""


class ManifestMismatchError(ModelFormatError):
    """Stored tensors do not match the architecture's weight manifest."""


class NumericError(KwsError):
    """Base class for numeric failures."""


class DivergenceError(NumericError):
    """Training loss became non-finite."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class AgreementError(NumericError):
    """Reference and optimized compute paths disagree beyond tolerance."""
