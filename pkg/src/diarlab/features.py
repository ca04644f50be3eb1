"""Log-Mel filterbank frontend.

Framing with a periodic Hann window, zero-padded FFT power spectrum, a
triangular Mel filterbank, and a floored natural log.  Extraction is pure
and bitwise deterministic for identical inputs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import IO

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view

_FEATURE_MAGIC = b"DLFEAT1\x00"
_FRAME_BLOCK = 8192  # frames FFT'd per block; value-independent chunking


def _next_power_of_two(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@dataclass(frozen=True)
class FeatureConfig:
    """Frontend parameters.  fft_size defaults to the next power of two
    covering one window."""

    sample_rate: int = 16000
    window: float = 0.025
    hop: float = 0.010
    n_mels: int = 23
    fft_size: int | None = None
    log_floor: float = 1e-10
    mean_var_normalize: bool = False

    def __post_init__(self):
        if self.sample_rate < 1:
            raise ValueError("sample_rate must be >= 1")
        if not 0 < self.hop <= self.window:
            raise ValueError(f"need 0 < hop <= window, got hop={self.hop} window={self.window}")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not self.log_floor > 0:
            raise ValueError("log_floor must be positive")
        if self.fft_size is None:
            object.__setattr__(self, "fft_size", _next_power_of_two(self.window_samples))
        if self.fft_size & (self.fft_size - 1) or self.fft_size < self.window_samples:
            raise ValueError(
                f"fft_size must be a power of two >= window length "
                f"({self.window_samples} samples), got {self.fft_size}"
            )

    @property
    def window_samples(self) -> int:
        return int(round(self.window * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop * self.sample_rate))


@dataclass(eq=False)
class FeatureMatrix:
    """T x n_mels log-Mel frames at a fixed frame step."""

    frames: np.ndarray
    frame_step: float
    origin: str

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ValueError("feature matrix contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=float) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=float) / 2595.0) - 1.0)


def mel_band_edges_hz(config: FeatureConfig) -> np.ndarray:
    """n_mels + 2 band edges, equally spaced on the Mel scale from 0 Hz to
    Nyquist.  Filter j (1-based) is centered on edge j."""
    top = hz_to_mel(config.sample_rate / 2.0)
    return mel_to_hz(np.linspace(0.0, top, config.n_mels + 2))


def mel_filterbank_matrix(config: FeatureConfig) -> np.ndarray:
    """(fft_size/2 + 1) x n_mels matrix of triangular filters.

    Triangles are linear on the Mel scale; neighbouring filters overlap by
    construction.  Raises if any filter captures no FFT bin (n_mels too
    large for the FFT resolution).
    """
    n_bins = config.fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * (config.sample_rate / config.fft_size)
    bin_mel = hz_to_mel(bin_hz)
    edge_mel = hz_to_mel(mel_band_edges_hz(config))
    matrix = np.zeros((n_bins, config.n_mels))
    for j in range(config.n_mels):
        lower, center, upper = edge_mel[j], edge_mel[j + 1], edge_mel[j + 2]
        rising = (bin_mel - lower) / (center - lower)
        falling = (upper - bin_mel) / (upper - center)
        matrix[:, j] = np.maximum(0.0, np.minimum(rising, falling))
    column_sums = matrix.sum(axis=0)
    if np.any(column_sums <= 0):
        empty = np.flatnonzero(column_sums <= 0).tolist()
        raise ValueError(
            f"filters {empty} capture no FFT bin: n_mels={config.n_mels} is too "
            f"large for fft_size={config.fft_size} at {config.sample_rate} Hz"
        )
    return matrix


def _periodic_hann(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def extract_logmel(
    samples: np.ndarray,
    sample_rate: int,
    config: FeatureConfig,
    origin: str = "recording",
) -> FeatureMatrix:
    """Extract log-Mel features from mono audio.

    Integer PCM input is scaled to [-1, 1); float input is used as given.
    Frames: T = floor((duration - window) / hop) + 1; audio shorter than one
    window is an error.
    """
    if sample_rate != config.sample_rate:
        raise ValueError(
            f"audio rate {sample_rate} != config sample_rate {config.sample_rate}"
        )
    samples = np.asarray(samples)
    if samples.ndim != 1:
        raise ValueError(f"audio must be mono, got shape {samples.shape}")
    if np.issubdtype(samples.dtype, np.integer):
        samples = samples.astype(np.float64) / 32768.0
    else:
        samples = samples.astype(np.float64)
    win = config.window_samples
    hop = config.hop_samples
    if samples.size < win:
        raise ValueError(
            f"audio has {samples.size} samples, shorter than one window ({win})"
        )
    frames = sliding_window_view(samples, win)[::hop]
    window = _periodic_hann(win)
    mel_matrix = mel_filterbank_matrix(config)
    out = np.empty((frames.shape[0], config.n_mels))
    for start in range(0, frames.shape[0], _FRAME_BLOCK):
        block = frames[start : start + _FRAME_BLOCK] * window
        spectrum = np.fft.rfft(block, n=config.fft_size)
        power = spectrum.real**2 + spectrum.imag**2
        out[start : start + _FRAME_BLOCK] = power @ mel_matrix
    logmel = np.log(np.maximum(out, config.log_floor))
    if config.mean_var_normalize:
        mean = logmel.mean(axis=0)
        std = logmel.std(axis=0)
        logmel = (logmel - mean) / np.maximum(std, 1e-8)
    return FeatureMatrix(frames=logmel, frame_step=config.hop, origin=origin)


# ---------------------------------------------------------------------------
# feature dump format: magic, header (origin, T, n_mels, hop), f32 LE rows
# ---------------------------------------------------------------------------


def save_features(matrix: FeatureMatrix) -> bytes:
    origin = matrix.origin.encode("utf-8")
    header = struct.pack(
        "<H", len(origin)
    ) + origin + struct.pack("<QId", matrix.n_frames, matrix.n_mels, matrix.frame_step)
    data = np.ascontiguousarray(matrix.frames, dtype="<f4").tobytes()
    return _FEATURE_MAGIC + header + data


def load_features(blob: bytes) -> FeatureMatrix:
    if blob[: len(_FEATURE_MAGIC)] != _FEATURE_MAGIC:
        raise ValueError("bad feature dump magic")
    offset = len(_FEATURE_MAGIC)
    (name_len,) = struct.unpack_from("<H", blob, offset)
    offset += 2
    origin = blob[offset : offset + name_len].decode("utf-8")
    offset += name_len
    n_frames, n_mels, frame_step = struct.unpack_from("<QId", blob, offset)
    offset += struct.calcsize("<QId")
    expected = n_frames * n_mels * 4
    payload = blob[offset:]
    if len(payload) != expected:
        raise ValueError(
            f"feature dump payload has {len(payload)} bytes, expected {expected}"
        )
    frames = np.frombuffer(payload, dtype="<f4").reshape(n_frames, n_mels)
    return FeatureMatrix(frames=frames, frame_step=frame_step, origin=origin)


def save_features_file(path, matrix: FeatureMatrix) -> None:
    with open(path, "wb") as handle:
        handle.write(save_features(matrix))


def load_features_file(path) -> FeatureMatrix:
    with open(path, "rb") as handle:
        return load_features(handle.read())
