"""Forward pass: downsampler, Conformer encoder, attractor decoder, decoding.

Everything here is a pure function of (weights, inputs, config) and runs in
float64.  The attractor decoder is computed row by row with reductions over
the query axis made order-independent (sorted summation), so permuting the
decoder queries permutes attractors and existence probabilities bit-exactly.
Frame posteriors are computed per frame for the same reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..annotations import ActivityMatrix, Annotation, activity_to_annotation
from ..features import FeatureConfig, FeatureMatrix, extract_logmel
from .config import ModelConfig
from .weights import ModelWeights

_LN_EPS = 1e-5
_ATTN_ROW_BLOCK = 2048
_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


@dataclass(eq=False)
class EncoderOutput:
    """Encoded summary token (position 0) and frame embeddings (T' x d)."""

    summary: np.ndarray
    frames: np.ndarray


@dataclass(eq=False)
class AttractorSet:
    """(S+1) x d candidate attractors with existence probabilities in (0, 1)."""

    attractors: np.ndarray
    existence: np.ndarray

    def __post_init__(self):
        if self.attractors.shape[0] != self.existence.shape[0]:
            raise ValueError("attractor and existence counts differ")


@dataclass(eq=False)
class DiarizationResult:
    """Posterior activity for the attractor slots that pass the existence
    threshold, ordered by slot index."""

    active_indices: tuple[int, ...]
    posteriors: np.ndarray  # (T', n_active)
    activity: np.ndarray  # (T', n_active) bool
    frame_step: float


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    positive = x >= 0
    with np.errstate(over="ignore", under="ignore"):
        out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
        grown = np.exp(x[~positive])
        out[~positive] = grown / (1.0 + grown)
    return out


def _probability(x: np.ndarray) -> np.ndarray:
    # sigmoid saturates to exactly 0/1 in float64; clip keeps the open interval
    return np.clip(_sigmoid(x), _P_LO, _P_HI)


def _swish(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def _layer_norm(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * weight + bias


def _sorted_sum(values: np.ndarray, axis: int = 0) -> np.ndarray:
    # order-independent reduction: the float result depends only on the
    # multiset of addends, so permuting them cannot change it
    return np.sort(values, axis=axis).sum(axis=axis)


# ---------------------------------------------------------------------------
# downsampler
# ---------------------------------------------------------------------------


def _strided_conv(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, pad: int):
    kernel = weight.shape[2]
    if pad:
        x = np.pad(x, ((pad, pad), (0, 0)))
    windows = sliding_window_view(x, kernel, axis=0)[::stride]  # (L, in, k)
    flat = windows.reshape(windows.shape[0], -1)
    return flat @ weight.reshape(weight.shape[0], -1).T + bias


def downsampled_length(n_frames: int, config: ModelConfig) -> int:
    (k1, k2), (s1, s2) = config.downsample_kernels, config.downsample_strides
    length = (n_frames + 2 * ((k1 - 1) // 2) - k1) // s1 + 1
    return (length - k2) // s2 + 1


def conv_downsample(
    features: FeatureMatrix | np.ndarray, weights: ModelWeights, config: ModelConfig
) -> np.ndarray:
    """Two strided conv layers with ReLU; T frames become
    floor(ceil(T/s1)/s2) rows of width d_model at the default kernels."""
    x = features.frames if isinstance(features, FeatureMatrix) else np.asarray(features)
    x = x.astype(np.float64)
    if x.ndim != 2 or x.shape[1] != config.feat_dim:
        raise ValueError(f"expected (T, {config.feat_dim}) features, got {x.shape}")
    if x.shape[0] < 10:
        raise ValueError(f"need at least 10 frames to downsample, got {x.shape[0]}")
    params = weights.as_f64()
    (k1, k2), (s1, s2) = config.downsample_kernels, config.downsample_strides
    x = _strided_conv(
        x, params["downsample.conv1.weight"], params["downsample.conv1.bias"], s1, (k1 - 1) // 2
    )
    np.maximum(x, 0.0, out=x)
    x = _strided_conv(x, params["downsample.conv2.weight"], params["downsample.conv2.bias"], s2, 0)
    np.maximum(x, 0.0, out=x)
    return x


# ---------------------------------------------------------------------------
# Conformer encoder
# ---------------------------------------------------------------------------


def _encoder_self_attention(x: np.ndarray, params, prefix: str, heads: int) -> np.ndarray:
    length, d = x.shape
    dk = d // heads
    scale = 1.0 / math.sqrt(dk)
    q = x @ params[f"{prefix}.wq.weight"].T + params[f"{prefix}.wq.bias"]
    k = x @ params[f"{prefix}.wk.weight"].T + params[f"{prefix}.wk.bias"]
    v = x @ params[f"{prefix}.wv.weight"].T + params[f"{prefix}.wv.bias"]
    context = np.empty_like(x)
    for h in range(heads):
        cols = slice(h * dk, (h + 1) * dk)
        keys_t = np.ascontiguousarray(k[:, cols].T)
        values = np.ascontiguousarray(v[:, cols])
        # row blocks bound the L x L score buffer for long recordings
        for start in range(0, length, _ATTN_ROW_BLOCK):
            rows = slice(start, min(start + _ATTN_ROW_BLOCK, length))
            scores = (q[rows, cols] @ keys_t) * scale
            scores -= scores.max(axis=1, keepdims=True)
            np.exp(scores, out=scores)
            scores /= scores.sum(axis=1, keepdims=True)
            context[rows, cols] = scores @ values
    return context @ params[f"{prefix}.wo.weight"].T + params[f"{prefix}.wo.bias"]


def _encoder_ffn(x: np.ndarray, params, prefix: str) -> np.ndarray:
    y = _layer_norm(x, params[f"{prefix}.norm.weight"], params[f"{prefix}.norm.bias"])
    y = _swish(y @ params[f"{prefix}.w1.weight"].T + params[f"{prefix}.w1.bias"])
    return y @ params[f"{prefix}.w2.weight"].T + params[f"{prefix}.w2.bias"]


def _depthwise_conv_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    width = kernel.shape[1]
    pad = (width - 1) // 2
    padded = np.pad(x, ((pad, pad), (0, 0)))
    windows = sliding_window_view(padded, width, axis=0)  # (L, d, k)
    return np.einsum("ldk,dk->ld", windows, kernel, optimize=False) + bias


def _conv_module(x: np.ndarray, params, prefix: str) -> np.ndarray:
    d = x.shape[1]
    y = _layer_norm(x, params[f"{prefix}.norm.weight"], params[f"{prefix}.norm.bias"])
    y = y @ params[f"{prefix}.pw1.weight"].T + params[f"{prefix}.pw1.bias"]
    y = y[:, :d] * _sigmoid(y[:, d:])  # GLU
    y = _depthwise_conv_same(y, params[f"{prefix}.dw.weight"], params[f"{prefix}.dw.bias"])
    y = _layer_norm(y, params[f"{prefix}.norm2.weight"], params[f"{prefix}.norm2.bias"])
    y = _swish(y)
    return y @ params[f"{prefix}.pw2.weight"].T + params[f"{prefix}.pw2.bias"]


def _conformer_block(x: np.ndarray, params, prefix: str, config: ModelConfig) -> np.ndarray:
    x = x + 0.5 * _encoder_ffn(x, params, f"{prefix}.ffn1")
    attn_in = _layer_norm(
        x, params[f"{prefix}.attn.norm.weight"], params[f"{prefix}.attn.norm.bias"]
    )
    x = x + _encoder_self_attention(attn_in, params, f"{prefix}.attn", config.encoder_heads)
    x = x + _conv_module(x, params, f"{prefix}.conv")
    x = x + 0.5 * _encoder_ffn(x, params, f"{prefix}.ffn2")
    return _layer_norm(
        x, params[f"{prefix}.norm_out.weight"], params[f"{prefix}.norm_out.bias"]
    )


def encode_with_summary(
    frames: np.ndarray, weights: ModelWeights, config: ModelConfig
) -> EncoderOutput:
    """Prepend the learnable summary token and run the Conformer stack.

    The output splits into the encoded summary (position 0) and the frame
    embeddings (positions 1..T'); no positional encoding is used.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != config.d_model:
        raise ValueError(f"expected (T', {config.d_model}) input, got {frames.shape}")
    params = weights.as_f64()
    x = np.concatenate([params["encoder.summary_token"][None, :], frames], axis=0)
    for i in range(config.encoder_layers):
        x = _conformer_block(x, params, f"encoder.layer{i}", config)
    return EncoderOutput(summary=x[0], frames=x[1:])


# ---------------------------------------------------------------------------
# attractor decoder (row-exact: see module docstring)
# ---------------------------------------------------------------------------


def _rows_linear(params, prefix: str, x: np.ndarray) -> np.ndarray:
    weight = params[f"{prefix}.weight"]
    bias = params[f"{prefix}.bias"]
    return np.stack([weight @ row + bias for row in x])


def _decoder_self_attention(x: np.ndarray, params, prefix: str, heads: int) -> np.ndarray:
    length, d = x.shape
    dk = d // heads
    scale = 1.0 / math.sqrt(dk)
    q = _rows_linear(params, f"{prefix}.wq", x)
    k = _rows_linear(params, f"{prefix}.wk", x)
    v = _rows_linear(params, f"{prefix}.wv", x)
    context = np.empty_like(x)
    for h in range(heads):
        cols = slice(h * dk, (h + 1) * dk)
        keys = [np.array(k[j, cols]) for j in range(length)]
        values = np.array(v[:, cols])
        for i in range(length):
            query = np.array(q[i, cols])
            scores = np.array([np.dot(query, key) for key in keys]) * scale
            exps = np.exp(scores - scores.max())
            attn = exps / _sorted_sum(exps)
            context[i, cols] = _sorted_sum(attn[:, None] * values, axis=0)
    return _rows_linear(params, f"{prefix}.wo", context)


def _decoder_cross_attention(
    x: np.ndarray, memory_k: np.ndarray, memory_v: np.ndarray, params, prefix: str, heads: int
) -> np.ndarray:
    length, d = x.shape
    dk = d // heads
    scale = 1.0 / math.sqrt(dk)
    q = _rows_linear(params, f"{prefix}.wq", x)
    context = np.empty_like(x)
    for h in range(heads):
        cols = slice(h * dk, (h + 1) * dk)
        mem_k = np.ascontiguousarray(memory_k[:, cols])
        mem_v_t = np.ascontiguousarray(memory_v[:, cols].T)
        for i in range(length):
            scores = (mem_k @ q[i, cols]) * scale
            exps = np.exp(scores - scores.max())
            attn = exps / exps.sum()
            context[i, cols] = mem_v_t @ attn
    return _rows_linear(params, f"{prefix}.wo", context)


def _decoder_ffn(x: np.ndarray, params, prefix: str) -> np.ndarray:
    hidden = np.maximum(_rows_linear(params, f"{prefix}.w1", x), 0.0)
    return _rows_linear(params, f"{prefix}.w2", hidden)


def compute_attractors(
    summary: np.ndarray, frames: np.ndarray, weights: ModelWeights, config: ModelConfig
) -> AttractorSet:
    """Combine the encoded summary with the S+1 learnable queries and run the
    Transformer decoder (post-norm, no positional embeddings) over memory =
    frame embeddings.  Existence probabilities come from a linear + sigmoid
    head and lie strictly inside (0, 1)."""
    params = weights.as_f64()
    frames = np.asarray(frames, dtype=np.float64)
    summary = np.asarray(summary, dtype=np.float64)
    x = params["decoder.queries"] + summary  # combiner: elementwise addition
    for i in range(config.decoder_layers):
        prefix = f"decoder.layer{i}"
        x = _layer_norm(
            x + _decoder_self_attention(x, params, f"{prefix}.self_attn", config.decoder_heads),
            params[f"{prefix}.self_attn.norm.weight"],
            params[f"{prefix}.self_attn.norm.bias"],
        )
        memory_k = frames @ params[f"{prefix}.cross_attn.wk.weight"].T + params[
            f"{prefix}.cross_attn.wk.bias"
        ]
        memory_v = frames @ params[f"{prefix}.cross_attn.wv.weight"].T + params[
            f"{prefix}.cross_attn.wv.bias"
        ]
        x = _layer_norm(
            x
            + _decoder_cross_attention(
                x, memory_k, memory_v, params, f"{prefix}.cross_attn", config.decoder_heads
            ),
            params[f"{prefix}.cross_attn.norm.weight"],
            params[f"{prefix}.cross_attn.norm.bias"],
        )
        x = _layer_norm(
            x + _decoder_ffn(x, params, f"{prefix}.ffn"),
            params[f"{prefix}.ffn.norm.weight"],
            params[f"{prefix}.ffn.norm.bias"],
        )
    logits = np.array(
        [np.dot(params["existence.weight"][0], row) for row in x]
    ) + params["existence.bias"][0]
    return AttractorSet(attractors=x, existence=_probability(logits))


def count_speakers(attractors: AttractorSet, config: ModelConfig) -> int:
    """Estimated speaker count: slots below index S whose existence
    probability reaches the threshold (>= comparison)."""
    p = attractors.existence[: config.max_speakers]
    return int(np.count_nonzero(p >= config.existence_threshold))


def diarize(
    frames: np.ndarray,
    attractors: AttractorSet,
    config: ModelConfig,
    frame_step: float = 0.1,
) -> DiarizationResult:
    """Sigmoid of the frame-embedding x attractor inner products for the
    active speaker slots; activity is posterior >= diarization threshold.
    Zero active slots yields a valid empty result."""
    frames = np.asarray(frames, dtype=np.float64)
    active = tuple(
        i
        for i in range(config.max_speakers)
        if attractors.existence[i] >= config.existence_threshold
    )
    selected = np.asarray(attractors.attractors, dtype=np.float64)[list(active)]
    # einsum keeps each frame row's reduction independent of its position
    logits = np.einsum("td,kd->tk", frames, selected, optimize=False)
    posteriors = _probability(logits)
    return DiarizationResult(
        active_indices=active,
        posteriors=posteriors,
        activity=posteriors >= config.diarization_threshold,
        frame_step=frame_step,
    )


def run_inference(
    samples: np.ndarray,
    sample_rate: int,
    weights: ModelWeights,
    model_config: ModelConfig | None = None,
    feature_config: FeatureConfig | None = None,
    recording_id: str = "recording",
) -> tuple[DiarizationResult, Annotation]:
    """Full pipeline: features, downsample, encode, attractors, decode, and
    conversion of frame activity into an annotation with labels spk0..."""
    if model_config is None:
        model_config = ModelConfig()
    if feature_config is None:
        feature_config = FeatureConfig(sample_rate=sample_rate)
    if feature_config.n_mels != model_config.feat_dim:
        raise ValueError(
            f"feature n_mels {feature_config.n_mels} != model feat_dim "
            f"{model_config.feat_dim}"
        )
    features = extract_logmel(samples, sample_rate, feature_config, origin=recording_id)
    downsampled = conv_downsample(features, weights, model_config)
    encoded = encode_with_summary(downsampled, weights, model_config)
    attractors = compute_attractors(encoded.summary, encoded.frames, weights, model_config)
    frame_step = feature_config.hop * model_config.downsample_factor
    result = diarize(encoded.frames, attractors, model_config, frame_step=frame_step)
    labels = tuple(f"spk{i}" for i in range(len(result.active_indices)))
    matrix = ActivityMatrix(
        frame_step=frame_step, speakers=labels, cells=result.activity.T
    )
    annotation = activity_to_annotation(
        matrix, recording_id, extent=len(samples) / sample_rate
    )
    return result, annotation
