"""Merged pipeline configuration document.

A single JSON file with optional "simulation", "features", "model", and
"scoring" sections.  The document is schema-validated before any stage
runs; section values fill the corresponding config dataclasses and CLI
flags override file values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import jsonschema

from .features import FeatureConfig
from .model import ModelConfig
from .scoring import ScoringConfig
from .simulator import DEFAULT_SILENCE_MEANS

_NUMBER_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_INT_POSITIVE = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "utterances_per_speaker": {
                    "type": "array",
                    "items": _INT_POSITIVE,
                    "minItems": 2,
                    "maxItems": 2,
                },
                "silence_cap": _NUMBER_POSITIVE,
                "cap_resample_range": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "sample_rate": _INT_POSITIVE,
                "silence_means": {
                    "type": "object",
                    "patternProperties": {"^[0-9]+$": _NUMBER_POSITIVE},
                    "additionalProperties": False,
                },
            },
        },
        "features": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sample_rate": _INT_POSITIVE,
                "window": _NUMBER_POSITIVE,
                "hop": _NUMBER_POSITIVE,
                "n_mels": _INT_POSITIVE,
                "fft_size": _INT_POSITIVE,
                "log_floor": _NUMBER_POSITIVE,
                "mean_var_normalize": {"type": "boolean"},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "feat_dim": _INT_POSITIVE,
                "d_model": _INT_POSITIVE,
                "encoder_layers": _INT_POSITIVE,
                "encoder_heads": _INT_POSITIVE,
                "encoder_ffn": _INT_POSITIVE,
                "conformer_conv_kernel": _INT_POSITIVE,
                "decoder_layers": _INT_POSITIVE,
                "decoder_heads": _INT_POSITIVE,
                "decoder_ffn": _INT_POSITIVE,
                "max_speakers": _INT_POSITIVE,
                "downsample_kernels": {
                    "type": "array",
                    "items": _INT_POSITIVE,
                    "minItems": 2,
                    "maxItems": 2,
                },
                "downsample_strides": {
                    "type": "array",
                    "items": _INT_POSITIVE,
                    "minItems": 2,
                    "maxItems": 2,
                },
                "existence_threshold": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "exclusiveMaximum": 1,
                },
                "diarization_threshold": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "exclusiveMaximum": 1,
                },
            },
        },
        "scoring": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "collar": {"type": "number", "minimum": 0},
                "score_overlap": {"type": "boolean"},
            },
        },
    },
}


@dataclass(frozen=True)
class SimDefaults:
    """Simulation knobs that do not depend on the requested speaker count."""

    utterances_per_speaker: tuple[int, int] = (2, 5)
    silence_cap: float = 5.0
    cap_resample_range: tuple[float, float] = (1.0, 5.0)
    sample_rate: int = 16000
    silence_means: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_SILENCE_MEANS)
    )


@dataclass(frozen=True)
class PipelineConfig:
    simulation: SimDefaults = field(default_factory=SimDefaults)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)

    @classmethod
    def from_document(cls, document: dict) -> "PipelineConfig":
        jsonschema.validate(document, CONFIG_SCHEMA)
        sim = dict(document.get("simulation", {}))
        if "utterances_per_speaker" in sim:
            sim["utterances_per_speaker"] = tuple(sim["utterances_per_speaker"])
        if "cap_resample_range" in sim:
            sim["cap_resample_range"] = tuple(sim["cap_resample_range"])
        if "silence_means" in sim:
            sim["silence_means"] = {
                int(count): value for count, value in sim["silence_means"].items()
            }
        model = dict(document.get("model", {}))
        for key in ("downsample_kernels", "downsample_strides"):
            if key in model:
                model[key] = tuple(model[key])
        return cls(
            simulation=SimDefaults(**sim),
            features=FeatureConfig(**document.get("features", {})),
            model=ModelConfig(**model),
            scoring=ScoringConfig(**document.get("scoring", {})),
        )


def load_pipeline_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as handle:
        document = json.load(handle)
    return PipelineConfig.from_document(document)
