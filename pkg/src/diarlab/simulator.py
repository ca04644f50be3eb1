"""Multi-speaker mixture synthesis with capped-exponential silence gaps.

Speaker tracks are built by concatenating corpus utterances separated by
silences drawn from an exponential distribution whose draws above a cap are
replaced by a uniform draw; tracks are summed sample-exactly in a widened
accumulator.  Also provides the reverse derivation of mean silence values
from real annotations and dataset statistics (overlap, duration, crop
coverage).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.io import wavfile

from .annotations import Annotation, SpeakerTurn, overlap_components, speaker_silence_gaps

#: Default mean silence interval (seconds) per number of speakers in a mixture.
DEFAULT_SILENCE_MEANS: dict[int, float] = {
    1: 2.0,
    2: 2.0,
    3: 5.0,
    4: 9.0,
    5: 34.0,
    6: 54.0,
    7: 47.0,
    8: 50.0,
}

_MASK64 = (1 << 64) - 1
_PCM_FULL_SCALE = 32767


@dataclass(frozen=True)
class CorpusUtterance:
    """A single speaker-labeled utterance: mono 16-bit samples at a fixed rate."""

    speaker_id: str
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.int16)
        if samples.ndim != 1:
            raise ValueError(f"utterance audio must be mono, got shape {samples.shape}")
        if samples.size == 0:
            raise ValueError("utterance audio must be non-empty")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


class CorpusIndex:
    """Speaker-to-utterance inventory with a uniform sample rate."""

    def __init__(self, utterances: Iterable[CorpusUtterance]):
        self._by_speaker: dict[str, list[CorpusUtterance]] = {}
        rates = set()
        for utt in utterances:
            self._by_speaker.setdefault(utt.speaker_id, []).append(utt)
            rates.add(utt.sample_rate)
        if not self._by_speaker:
            raise ValueError("corpus contains no utterances")
        if len(rates) > 1:
            raise ValueError(f"corpus mixes sample rates: {sorted(rates)}")
        self.sample_rate = rates.pop()

    @property
    def speaker_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_speaker))

    def utterances(self, speaker_id: str) -> list[CorpusUtterance]:
        return self._by_speaker[speaker_id]

    def __len__(self) -> int:
        return len(self._by_speaker)


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulated mixture."""

    n_speakers: int
    mean_silence: float
    utterances_per_speaker: tuple[int, int] = (2, 5)
    silence_cap: float = 5.0
    cap_resample_range: tuple[float, float] = (1.0, 5.0)
    sample_rate: int = 16000
    seed: int = 0
    # room/noise augmentation hook; None keeps the clean sum of tracks
    augmentation: object | None = None

    def __post_init__(self):
        lo, hi = self.cap_resample_range
        umin, umax = self.utterances_per_speaker
        if self.n_speakers < 1:
            raise ValueError("n_speakers must be >= 1")
        if not self.mean_silence > 0:
            raise ValueError("mean_silence must be positive")
        if umin < 1 or umax < umin:
            raise ValueError(f"bad utterances_per_speaker range {self.utterances_per_speaker}")
        if not self.silence_cap > 0:
            raise ValueError("silence_cap must be positive")
        if not (0 <= lo <= hi <= self.silence_cap):
            raise ValueError(
                f"cap_resample_range {self.cap_resample_range} must lie within "
                f"[0, {self.silence_cap}]"
            )
        if self.sample_rate < 1:
            raise ValueError("sample_rate must be >= 1")


@dataclass(frozen=True)
class PlacedUtterance:
    speaker_id: str
    utterance_index: int
    onset: float


@dataclass(eq=False)
class Mixture:
    """A synthesized recording plus its reference annotation and provenance."""

    samples: np.ndarray
    sample_rate: int
    annotation: Annotation
    provenance: tuple[PlacedUtterance, ...]
    peak_scale: float = 1.0

    def __post_init__(self):
        if len(self.annotation.turns) != len(self.provenance):
            raise ValueError("annotation turn count must equal placed utterance count")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def derive_seed(base_seed: int, index: int) -> int:
    """Per-mixture seed: the index-th output of a splitmix64 stream at base_seed."""
    z = (base_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sample_silence(
    mean_silence: float,
    rng: np.random.Generator,
    *,
    cap: float = 5.0,
    resample_range: tuple[float, float] = (1.0, 5.0),
) -> float:
    """Draw one silence duration.

    Exponential with the given mean; draws above ``cap`` are replaced by a
    fresh uniform draw from ``resample_range``.
    """
    if not mean_silence > 0:
        raise ValueError("mean_silence must be positive")
    duration = rng.exponential(mean_silence)
    if duration > cap:
        return rng.uniform(*resample_range)
    return duration


def capped_silence_cdf(
    x, mean_silence: float, cap: float = 5.0, resample_range: tuple[float, float] = (1.0, 5.0)
):
    """Analytic CDF of the capped-exponential silence distribution."""
    x = np.asarray(x, dtype=float)
    lo, hi = resample_range
    tail = math.exp(-cap / mean_silence)
    kept = np.where(x < cap, -np.expm1(-np.minimum(x, cap) / mean_silence), 1.0 - tail)
    uniform_part = np.clip((x - lo) / (hi - lo), 0.0, 1.0) if hi > lo else (x >= lo).astype(float)
    return kept + tail * uniform_part


def simulate_mixture(
    index: CorpusIndex, config: SimConfig, recording_id: str | None = None
) -> Mixture:
    """Synthesize one mixture: a pure function of (index, config, recording_id).

    Speakers are chosen without replacement, utterances with replacement
    within each speaker.  Each speaker track gets one capped-silence leading
    offset and capped-silence gaps between utterances; tracks are summed in
    int64 and rescaled only if the sum would clip.
    """
    if config.sample_rate != index.sample_rate:
        raise ValueError(
            f"config sample_rate {config.sample_rate} != corpus rate {index.sample_rate}"
        )
    if len(index) < config.n_speakers:
        raise ValueError(
            f"corpus has {len(index)} speakers, need {config.n_speakers}"
        )
    rng = np.random.default_rng(config.seed)
    rate = config.sample_rate
    umin, umax = config.utterances_per_speaker
    chosen = rng.choice(np.array(index.speaker_ids, dtype=object), size=config.n_speakers, replace=False)

    def draw_gap_samples() -> int:
        gap = sample_silence(
            config.mean_silence,
            rng,
            cap=config.silence_cap,
            resample_range=config.cap_resample_range,
        )
        return int(round(gap * rate))

    tracks: list[np.ndarray] = []
    placements: list[tuple[str, int, int, int]] = []  # (speaker, utt index, start, length)
    for speaker_id in chosen:
        utterances = index.utterances(speaker_id)
        count = int(rng.integers(umin, umax + 1))
        utt_indices = rng.integers(0, len(utterances), size=count)
        cursor = draw_gap_samples()  # leading offset, same capped rule
        pieces: list[np.ndarray] = [np.zeros(cursor, dtype=np.int16)]
        for position, utt_index in enumerate(utt_indices):
            if position > 0:
                gap = draw_gap_samples()
                pieces.append(np.zeros(gap, dtype=np.int16))
                cursor += gap
            samples = utterances[int(utt_index)].samples
            pieces.append(samples)
            placements.append((speaker_id, int(utt_index), cursor, samples.size))
            cursor += samples.size
        tracks.append(np.concatenate(pieces))

    total = max(track.size for track in tracks)
    accumulator = np.zeros(total, dtype=np.int64)
    for track in tracks:
        accumulator[: track.size] += track
    peak = int(np.abs(accumulator).max(initial=0))
    if peak > _PCM_FULL_SCALE:
        scale = _PCM_FULL_SCALE / peak
        samples = np.round(accumulator * scale).astype(np.int16)
    else:
        scale = 1.0
        samples = accumulator.astype(np.int16)

    if recording_id is None:
        recording_id = f"mix_{config.n_speakers}spk_{config.seed & _MASK64:016x}"
    placements.sort(key=lambda p: (p[2], p[0], p[1]))
    turns = []
    provenance = []
    for speaker_id, utt_index, start, length in placements:
        onset = start / rate
        # duration from the end sample keeps onset + duration <= extent exact
        turns.append(
            SpeakerTurn(recording_id, speaker_id, onset, (start + length) / rate - onset)
        )
        provenance.append(PlacedUtterance(speaker_id, utt_index, onset))
    annotation = Annotation(recording_id, tuple(turns), extent=total / rate)
    return Mixture(
        samples=samples,
        sample_rate=rate,
        annotation=annotation,
        provenance=tuple(provenance),
        peak_scale=scale,
    )


def generate_mixtures(
    index: CorpusIndex,
    config: SimConfig,
    count: int,
    recording_id_format: str | None = None,
) -> list[Mixture]:
    """Generate ``count`` mixtures with per-mixture seeds derived from config.seed.

    Results are ordered by mixture index and independent of scheduling; the
    DIARLAB_THREADS environment variable caps worker threads (default 1).
    ``recording_id_format`` may reference {n} (speaker count) and {i} (index).
    """
    jobs = []
    for i in range(count):
        rec_id = None
        if recording_id_format is not None:
            rec_id = recording_id_format.format(n=config.n_speakers, i=i)
        jobs.append((replace(config, seed=derive_seed(config.seed, i)), rec_id))
    workers = int(os.environ.get("DIARLAB_THREADS", "1"))
    if workers <= 1 or count <= 1:
        return [simulate_mixture(index, c, rec_id) for c, rec_id in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: simulate_mixture(index, *job), jobs))


@dataclass(frozen=True)
class SilenceMeanEstimate:
    exact: float
    rounded: int
    n_speaker_means: int


def derive_silence_means(
    annotations: Iterable[Annotation],
) -> dict[int, SilenceMeanEstimate]:
    """Estimate the mean silence interval per speaker-count group.

    Per recording and speaker: the mean of that speaker's silence gaps
    (speakers with no gaps contribute nothing).  Per group: the mean over
    all (recording, speaker) pairs, grouped by the recording's speaker
    count.  A group where every speaker lacks gaps is an error.
    """
    groups: dict[int, list[float]] = {}
    seen_groups: set[int] = set()
    for annotation in annotations:
        count = annotation.speaker_count
        seen_groups.add(count)
        for speaker in annotation.speakers:
            gaps = speaker_silence_gaps(annotation, speaker)
            if gaps:
                groups.setdefault(count, []).append(sum(gaps) / len(gaps))
    empty = seen_groups - set(groups)
    if empty:
        raise ValueError(
            f"speaker-count groups {sorted(empty)} contain no silence gaps"
        )
    result = {}
    for count in sorted(groups):
        means = groups[count]
        exact = sum(means) / len(means)
        result[count] = SilenceMeanEstimate(exact, round(exact), len(means))
    return result


def seen_percentage(
    dataset: Sequence[Annotation],
    crop_length: float,
    trials_per_item: int,
    rng: np.random.Generator,
) -> dict[int, float]:
    """Distribution of in-crop active speaker counts under random cropping.

    For each annotation and trial, draw a uniform crop window of
    ``crop_length`` (the whole recording when shorter) and count speakers
    with any activity inside it.  Returns, per count k, the fraction of all
    (item, trial) samples whose in-crop count equals k.
    """
    if not crop_length > 0:
        raise ValueError("crop_length must be positive")
    counts: dict[int, int] = {}
    total = 0
    for annotation in dataset:
        if annotation.extent is None:
            raise ValueError(
                f"annotation {annotation.recording_id!r} has no extent"
            )
        span = annotation.extent - crop_length
        intervals = [(t.onset, t.end, t.speaker) for t in annotation.turns]
        for _ in range(trials_per_item):
            start = rng.uniform(0.0, span) if span > 0 else 0.0
            end = min(start + crop_length, annotation.extent)
            seen = {s for a, b, s in intervals if a < end and b > start}
            counts[len(seen)] = counts.get(len(seen), 0) + 1
            total += 1
    return {k: counts[k] / total for k in sorted(counts)}


@dataclass(frozen=True)
class GroupStats:
    n_recordings: int
    hours: float
    overlap_seconds: float
    speech_seconds: float

    @property
    def overlap_ratio(self) -> float:
        return self.overlap_seconds / self.speech_seconds if self.speech_seconds > 0 else 0.0


@dataclass(frozen=True)
class CorpusStats:
    """Per-speaker-count dataset statistics (pooled overlap, total duration)."""

    groups: dict[int, GroupStats]
    total_hours: float

    def to_dict(self) -> dict:
        return {
            "total_hours": self.total_hours,
            "groups": {
                str(count): {
                    "n_recordings": g.n_recordings,
                    "hours": g.hours,
                    "overlap_seconds": g.overlap_seconds,
                    "speech_seconds": g.speech_seconds,
                    "overlap_percent": 100.0 * g.overlap_ratio,
                }
                for count, g in sorted(self.groups.items())
            },
        }


def annotation_stats(annotations: Sequence[Annotation]) -> CorpusStats:
    """Aggregate overlap and duration grouped by speaker count.

    Group overlap is pooled: summed overlap seconds over summed speech
    seconds, not a mean of per-recording ratios.
    """
    acc: dict[int, list[float]] = {}
    for annotation in annotations:
        overlap, speech = overlap_components(annotation)
        entry = acc.setdefault(annotation.speaker_count, [0, 0.0, 0.0, 0.0])
        entry[0] += 1
        entry[1] += annotation.extent / 3600.0
        entry[2] += overlap
        entry[3] += speech
    groups = {
        count: GroupStats(int(n), hours, overlap, speech)
        for count, (n, hours, overlap, speech) in acc.items()
    }
    return CorpusStats(groups=groups, total_hours=sum(g.hours for g in groups.values()))


def corpus_stats(mixtures: Sequence[Mixture]) -> CorpusStats:
    return annotation_stats([m.annotation for m in mixtures])


# ---------------------------------------------------------------------------
# WAV and manifest I/O
# ---------------------------------------------------------------------------


def load_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono 16-bit PCM WAV file as (samples, sample_rate)."""
    rate, data = wavfile.read(path)
    if data.dtype != np.int16:
        raise ValueError(f"{path}: expected 16-bit PCM, got dtype {data.dtype}")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got shape {data.shape}")
    return data, int(rate)


def save_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    wavfile.write(path, sample_rate, np.asarray(samples, dtype=np.int16))


def load_corpus_manifest(path) -> CorpusIndex:
    """Load a corpus from a JSONL manifest.

    Each line is an object {"speaker_id", "path", "duration"}; paths are
    resolved relative to the manifest location.  The stated duration must
    match the audio within 50 ms.
    """
    path = Path(path)
    utterances = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                speaker_id = record["speaker_id"]
                wav_path = record["path"]
                stated = float(record["duration"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_number}: bad manifest record: {exc}") from None
            samples, rate = load_wav(path.parent / wav_path)
            utterance = CorpusUtterance(speaker_id, samples, rate)
            if abs(utterance.duration - stated) > 0.05:
                raise ValueError(
                    f"{path}:{line_number}: stated duration {stated} differs from "
                    f"audio duration {utterance.duration:.3f}"
                )
            utterances.append(utterance)
    return CorpusIndex(utterances)


def write_corpus_manifest(path, utterance_files: Sequence[tuple[str, str, float]]) -> None:
    """Write a JSONL manifest from (speaker_id, relative path, duration) rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for speaker_id, rel_path, duration in utterance_files:
            handle.write(
                json.dumps(
                    {"speaker_id": speaker_id, "path": rel_path, "duration": duration},
                    sort_keys=True,
                )
                + "\n"
            )
