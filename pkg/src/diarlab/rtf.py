"""Real-time-factor measurement.

Recordings are pre-loaded into memory before timing starts; decoding runs
strictly one by one on a monotonic clock and covers feature extraction,
inference, and decoding, but no disk I/O.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .features import FeatureConfig
from .model import ModelConfig, ModelWeights, run_inference


class BenchError(RuntimeError):
    """Decoding failed during measurement; carries the recording id."""

    def __init__(self, recording_id: str, cause: BaseException):
        super().__init__(f"decoding failed for recording {recording_id!r}: {cause}")
        self.recording_id = recording_id


@dataclass(frozen=True)
class RecordingTiming:
    recording_id: str
    audio_seconds: float
    decode_seconds: float


@dataclass(frozen=True)
class RtfReport:
    total_audio: float
    total_decode: float
    per_recording: tuple[RecordingTiming, ...]
    environment: str
    reversed_rtf: float | None = None

    @property
    def rtf(self) -> float:
        return self.total_decode / self.total_audio

    def to_dict(self) -> dict:
        out = {
            "total_audio": self.total_audio,
            "total_decode": self.total_decode,
            "rtf": self.rtf,
            "per_recording": [
                {
                    "recording_id": t.recording_id,
                    "audio_seconds": t.audio_seconds,
                    "decode_seconds": t.decode_seconds,
                }
                for t in self.per_recording
            ],
            "environment": self.environment,
        }
        if self.reversed_rtf is not None:
            out["reversed_rtf"] = self.reversed_rtf
        return out


def _environment_note() -> str:
    return (
        f"{platform.platform()}; python {platform.python_version()}; "
        f"numpy {np.__version__}"
    )


def _timed_pass(
    recordings: Sequence[tuple[str, np.ndarray, int]],
    weights: ModelWeights,
    model_config: ModelConfig,
    feature_config: FeatureConfig,
) -> list[RecordingTiming]:
    timings = []
    for recording_id, samples, sample_rate in recordings:
        start = time.perf_counter()
        try:
            run_inference(
                samples, sample_rate, weights, model_config, feature_config, recording_id
            )
        except Exception as exc:
            raise BenchError(recording_id, exc) from exc
        elapsed = time.perf_counter() - start
        timings.append(
            RecordingTiming(recording_id, len(samples) / sample_rate, elapsed)
        )
    return timings


def rtf_measure(
    weights: ModelWeights,
    recordings: Sequence[tuple[str, np.ndarray, int]],
    model_config: ModelConfig | None = None,
    feature_config: FeatureConfig | None = None,
    *,
    warmup: bool = True,
    self_test: bool = False,
) -> RtfReport:
    """Measure decoding wall time over pre-loaded (id, samples, rate) tuples.

    One untimed warm-up decode precedes measurement to exclude one-time
    setup.  With ``self_test`` the list is also decoded in reverse order and
    the reversed RTF is reported alongside (the two agree up to timing
    noise).
    """
    if not recordings:
        raise ValueError("need at least one recording")
    if model_config is None:
        model_config = ModelConfig()
    if feature_config is None:
        feature_config = FeatureConfig(sample_rate=recordings[0][2])
    if warmup:
        recording_id, samples, sample_rate = recordings[0]
        try:
            run_inference(
                samples, sample_rate, weights, model_config, feature_config, recording_id
            )
        except Exception as exc:
            raise BenchError(recording_id, exc) from exc
    timings = _timed_pass(recordings, weights, model_config, feature_config)
    total_audio = sum(t.audio_seconds for t in timings)
    total_decode = sum(t.decode_seconds for t in timings)
    reversed_rtf = None
    if self_test:
        reversed_timings = _timed_pass(
            list(reversed(recordings)), weights, model_config, feature_config
        )
        reversed_rtf = sum(t.decode_seconds for t in reversed_timings) / total_audio
    return RtfReport(
        total_audio=total_audio,
        total_decode=total_decode,
        per_recording=tuple(timings),
        environment=_environment_note(),
        reversed_rtf=reversed_rtf,
    )
