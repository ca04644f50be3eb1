"""Architecture hyperparameters and the named-parameter inventory."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ModelConfig:
    feat_dim: int = 23
    d_model: int = 256
    encoder_layers: int = 6
    encoder_heads: int = 4
    encoder_ffn: int = 1024
    conformer_conv_kernel: int = 15
    decoder_layers: int = 3
    decoder_heads: int = 4
    decoder_ffn: int = 1024
    max_speakers: int = 8
    downsample_kernels: tuple[int, int] = (3, 5)
    downsample_strides: tuple[int, int] = (2, 5)
    existence_threshold: float = 0.5
    diarization_threshold: float = 0.5

    def __post_init__(self):
        if self.d_model % self.encoder_heads or self.d_model % self.decoder_heads:
            raise ValueError(
                f"d_model {self.d_model} must be divisible by head counts "
                f"{self.encoder_heads}/{self.decoder_heads}"
            )
        if self.max_speakers < 1:
            raise ValueError("max_speakers must be >= 1")
        for name, value in (
            ("existence_threshold", self.existence_threshold),
            ("diarization_threshold", self.diarization_threshold),
        ):
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie strictly in (0, 1), got {value}")
        if self.conformer_conv_kernel < 1 or self.conformer_conv_kernel % 2 == 0:
            raise ValueError("conformer_conv_kernel must be odd and >= 1")
        if len(self.downsample_kernels) != 2 or len(self.downsample_strides) != 2:
            raise ValueError("downsampler uses exactly two conv layers")
        if min(self.feat_dim, self.encoder_layers, self.decoder_layers) < 1:
            raise ValueError("feat_dim and layer counts must be >= 1")

    @property
    def downsample_factor(self) -> int:
        s1, s2 = self.downsample_strides
        return s1 * s2

    @classmethod
    def toy(cls) -> "ModelConfig":
        """Desk-testable scale; same topology, ~66 k parameters."""
        return cls(
            d_model=32,
            encoder_layers=2,
            encoder_heads=2,
            encoder_ffn=64,
            conformer_conv_kernel=7,
            decoder_layers=2,
            decoder_heads=2,
            decoder_ffn=64,
        )


def _attention_params(prefix: str, d: int) -> list[tuple[str, tuple[int, ...]]]:
    specs = [(f"{prefix}.norm.weight", (d,)), (f"{prefix}.norm.bias", (d,))]
    for proj in ("wq", "wk", "wv", "wo"):
        specs.append((f"{prefix}.{proj}.weight", (d, d)))
        specs.append((f"{prefix}.{proj}.bias", (d,)))
    return specs


def _ffn_params(prefix: str, d: int, hidden: int) -> list[tuple[str, tuple[int, ...]]]:
    return [
        (f"{prefix}.norm.weight", (d,)),
        (f"{prefix}.norm.bias", (d,)),
        (f"{prefix}.w1.weight", (hidden, d)),
        (f"{prefix}.w1.bias", (hidden,)),
        (f"{prefix}.w2.weight", (d, hidden)),
        (f"{prefix}.w2.bias", (d,)),
    ]


def parameter_spec(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) inventory; fixes the serialization order."""
    d = config.d_model
    k1, k2 = config.downsample_kernels
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("downsample.conv1.weight", (d, config.feat_dim, k1)),
        ("downsample.conv1.bias", (d,)),
        ("downsample.conv2.weight", (d, d, k2)),
        ("downsample.conv2.bias", (d,)),
        ("encoder.summary_token", (d,)),
    ]
    for i in range(config.encoder_layers):
        p = f"encoder.layer{i}"
        specs += _ffn_params(f"{p}.ffn1", d, config.encoder_ffn)
        specs += _attention_params(f"{p}.attn", d)
        specs += [
            (f"{p}.conv.norm.weight", (d,)),
            (f"{p}.conv.norm.bias", (d,)),
            (f"{p}.conv.pw1.weight", (2 * d, d)),
            (f"{p}.conv.pw1.bias", (2 * d,)),
            (f"{p}.conv.dw.weight", (d, config.conformer_conv_kernel)),
            (f"{p}.conv.dw.bias", (d,)),
            (f"{p}.conv.norm2.weight", (d,)),
            (f"{p}.conv.norm2.bias", (d,)),
            (f"{p}.conv.pw2.weight", (d, d)),
            (f"{p}.conv.pw2.bias", (d,)),
        ]
        specs += _ffn_params(f"{p}.ffn2", d, config.encoder_ffn)
        specs += [(f"{p}.norm_out.weight", (d,)), (f"{p}.norm_out.bias", (d,))]
    for i in range(config.decoder_layers):
        p = f"decoder.layer{i}"
        specs += _attention_params(f"{p}.self_attn", d)
        specs += _attention_params(f"{p}.cross_attn", d)
        specs += _ffn_params(f"{p}.ffn", d, config.decoder_ffn)
    specs += [
        ("decoder.queries", (config.max_speakers + 1, d)),
        ("existence.weight", (1, d)),
        ("existence.bias", (1,)),
    ]
    return specs


def parameter_count(config: ModelConfig) -> int:
    return sum(math.prod(shape) for _, shape in parameter_spec(config))
