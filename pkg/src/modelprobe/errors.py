"""Exception hierarchy shared by all modules."""


class ModelProbeError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(ModelProbeError):
    """A descriptor or config file failed schema validation."""

    def __init__(self, message, fields=None):
        super().__init__(message)
        self.fields = list(fields or [])


class TransportError(ModelProbeError):
    """HTTP transport failed after retries."""

    def __init__(self, message, attempts=1):
        super().__init__(message)
        self.attempts = attempts


class ProtocolError(ModelProbeError):
    """Remote response did not match the wire schema."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ContractError(ModelProbeError):
    """Response violated the model contract (e.g. unknown label)."""


class MissingFixtureError(ModelProbeError):
    """Fixture STT backend has no entry for the queried clip."""


class UnsupportedModelError(ModelProbeError):
    """Operation requires capabilities the model does not provide."""


class UnsupportedTransformError(ModelProbeError):
    """Transform is not applicable to the given image."""


class ParameterError(ModelProbeError):
    """Transform or attack parameter out of its documented range."""


class InfeasibleRegionError(ModelProbeError):
    """Path constraints describe an empty region."""


class ZeroRmsError(ModelProbeError):
    """Signal has zero RMS; SNR is undefined."""


class UndefinedWerError(ModelProbeError):
    """Reference text is empty after normalization; WER is undefined."""


class NumericalError(ModelProbeError):
    """Linear algebra failed even after jitter escalation."""
