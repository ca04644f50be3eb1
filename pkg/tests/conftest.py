"""Shared test helpers: synthetic corpora and randomized annotations.

Random annotations are generated on the millisecond grid so that RTTM's
3-decimal rendering is lossless and rational-arithmetic scores are exact.
"""

from __future__ import annotations

import numpy as np
import pytest

from diarlab.annotations import Annotation, SpeakerTurn
from diarlab.simulator import CorpusIndex, CorpusUtterance


def make_corpus(
    n_speakers: int,
    utts_per_speaker: int,
    rng: np.random.Generator,
    sample_rate: int = 8000,
    duration_range: tuple[float, float] = (0.2, 0.5),
    amplitude: int = 2500,
) -> CorpusIndex:
    """Noise-burst corpus; amplitudes keep an 8-speaker sum clipping-free."""
    utterances = []
    for s in range(n_speakers):
        speaker_id = f"speaker{s:03d}"
        for _ in range(utts_per_speaker):
            n = int(rng.uniform(*duration_range) * sample_rate)
            samples = rng.integers(-amplitude, amplitude + 1, size=max(n, 1))
            # all-nonzero samples so every annotated span carries energy
            samples = np.where(samples == 0, 1, samples).astype(np.int16)
            utterances.append(CorpusUtterance(speaker_id, samples, sample_rate))
    return CorpusIndex(utterances)


def ms(value: int) -> float:
    return value / 1000.0


def random_annotation(
    rng: np.random.Generator,
    recording_id: str = "rec",
    max_speakers: int = 5,
    max_turns: int = 10,
    extent_ms: int = 60_000,
    min_turn_ms: int = 200,
    max_turn_ms: int = 8_000,
) -> Annotation:
    """Random ms-grid annotation with at least one turn."""
    n_speakers = int(rng.integers(1, max_speakers + 1))
    n_turns = int(rng.integers(1, max_turns + 1))
    turns = []
    for _ in range(n_turns):
        speaker = f"s{rng.integers(0, n_speakers)}"
        duration = int(rng.integers(min_turn_ms, max_turn_ms + 1))
        onset = int(rng.integers(0, extent_ms - duration))
        turns.append(SpeakerTurn(recording_id, speaker, ms(onset), ms(duration)))
    turns.sort(key=lambda t: (t.onset, t.speaker))
    return Annotation(recording_id, tuple(turns), extent=ms(extent_ms))


def jittered_hypothesis(
    ref: Annotation,
    rng: np.random.Generator,
    max_jitter_ms: int = 240,
    rename: bool = True,
) -> Annotation:
    """Boundary-local perturbation of a reference.

    Every disagreement instant lies within max_jitter of a reference turn
    boundary, so a collar of max_jitter or more forgives all of it.  Labels
    are bijectively renamed; renaming alone never creates errors.
    """
    renaming = {}
    if rename:
        labels = list(ref.speakers)
        shuffled = list(labels)
        rng.shuffle(shuffled)
        renaming = {a: f"h_{b}" for a, b in zip(labels, shuffled)}
    turns = []
    for turn in ref.turns:
        onset_ms = round(turn.onset * 1000)
        end_ms = round(turn.end * 1000)
        onset_ms += int(rng.integers(-max_jitter_ms, max_jitter_ms + 1))
        end_ms += int(rng.integers(-max_jitter_ms, max_jitter_ms + 1))
        onset_ms = max(onset_ms, 0)
        if end_ms <= onset_ms:
            continue
        label = renaming.get(turn.speaker, turn.speaker)
        turns.append(
            SpeakerTurn(ref.recording_id, label, ms(onset_ms), ms(end_ms - onset_ms))
        )
    turns.sort(key=lambda t: (t.onset, t.speaker))
    return Annotation(ref.recording_id, tuple(turns), extent=None)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
