"""modelprobe: black-box testing toolkit for tabular, image and STT models."""

from . import audio, boattack, errors, gateway, imaging, runner, tabular  # noqa: F401
from .gateway import (  # noqa: F401
    ModelHandle,
    Prediction,
    Transcript,
    load_model,
    query_classifier,
    query_stt,
    register_model,
)

__version__ = "0.1.0"
