"""Two-stage neural character decoder over a minimal differentiable core."""

from .checkpoint import CheckpointError, load_model, read_container, save_model, vocab_hash, write_container
from .sancd import (
    DecodedText,
    GeometricDecoder,
    GeometricOnlyDecoder,
    ModelConfig,
    PixelMap,
    SANCDModel,
    SemanticDecoder,
    SequenceLengthError,
    default_heads,
    mask_by_confidence,
    normalize_points,
    pixel_prediction_map,
    softmax_confidence,
)

__all__ = [
    "CheckpointError",
    "DecodedText",
    "GeometricDecoder",
    "GeometricOnlyDecoder",
    "ModelConfig",
    "PixelMap",
    "SANCDModel",
    "SemanticDecoder",
    "SequenceLengthError",
    "default_heads",
    "load_model",
    "mask_by_confidence",
    "normalize_points",
    "pixel_prediction_map",
    "read_container",
    "save_model",
    "softmax_confidence",
    "vocab_hash",
    "write_container",
]
