"""Forward-only diarization network.

Convolutional downsampler, Conformer encoder with a prepended learnable
summary token, a combiner joining the encoded summary with decoder queries,
a Transformer attractor decoder, and sigmoid diarization decoding.  Weights
are stored as float32; forward math runs in float64.
"""

from .config import ModelConfig, parameter_count, parameter_spec
from .weights import (
    ModelWeights,
    WeightFormatError,
    WeightMagicError,
    WeightShapeError,
    WeightTruncationError,
    average_checkpoints,
    init_weights,
    load_weights,
    load_weights_file,
    save_weights,
    save_weights_file,
)
from .forward import (
    AttractorSet,
    DiarizationResult,
    EncoderOutput,
    compute_attractors,
    conv_downsample,
    count_speakers,
    diarize,
    encode_with_summary,
    run_inference,
)

__all__ = [
    "AttractorSet",
    "DiarizationResult",
    "EncoderOutput",
    "ModelConfig",
    "ModelWeights",
    "WeightFormatError",
    "WeightMagicError",
    "WeightShapeError",
    "WeightTruncationError",
    "average_checkpoints",
    "compute_attractors",
    "conv_downsample",
    "count_speakers",
    "diarize",
    "encode_with_summary",
    "init_weights",
    "load_weights",
    "load_weights_file",
    "parameter_count",
    "parameter_spec",
    "run_inference",
    "save_weights",
    "save_weights_file",
]
