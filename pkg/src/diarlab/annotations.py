"""Diarization data model, RTTM parsing/serialization, and timeline algebra.

Times are seconds. All values are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_RTTM_QUANTUM = Decimal("0.001")


class RttmParseError(ValueError):
    """Malformed RTTM input; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class SpeakerTurn:
    """One contiguous interval of speech by a single speaker."""

    recording_id: str
    speaker: str
    onset: float
    duration: float

    def __post_init__(self):
        if not self.speaker or any(c.isspace() for c in self.speaker):
            raise ValueError(
                f"speaker label must be non-empty and whitespace-free, got {self.speaker!r}"
            )
        if not (math.isfinite(self.onset) and self.onset >= 0.0):
            raise ValueError(f"onset must be finite and non-negative, got {self.onset}")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ValueError(f"duration must be finite and positive, got {self.duration}")

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class Annotation:
    """Per-recording diarization: an ordered sequence of speaker turns.

    ``extent`` is the recording length; operations that integrate over the
    recording require it to be set.
    """

    recording_id: str
    turns: tuple[SpeakerTurn, ...]
    extent: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        for turn in self.turns:
            if turn.recording_id != self.recording_id:
                raise ValueError(
                    f"turn recording_id {turn.recording_id!r} does not match "
                    f"annotation {self.recording_id!r}"
                )
            if self.extent is not None and turn.end > self.extent:
                raise ValueError(
                    f"turn [{turn.onset}, {turn.end}) exceeds extent {self.extent}"
                )

    @property
    def speakers(self) -> tuple[str, ...]:
        """Distinct speaker labels in sorted order."""
        return tuple(sorted({t.speaker for t in self.turns}))

    @property
    def speaker_count(self) -> int:
        return len({t.speaker for t in self.turns})

    def with_extent(self, extent: float) -> "Annotation":
        return replace(self, extent=extent)


@dataclass(eq=False)
class ActivityMatrix:
    """Frame-level speaker activity: one boolean row per speaker."""

    frame_step: float
    speakers: tuple[str, ...]
    cells: np.ndarray  # (n_speakers, n_frames) bool

    def __post_init__(self):
        self.speakers = tuple(self.speakers)
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2 or self.cells.shape[0] != len(self.speakers):
            raise ValueError(
                f"cells shape {self.cells.shape} does not match {len(self.speakers)} speakers"
            )

    @property
    def n_frames(self) -> int:
        return self.cells.shape[1]


# ---------------------------------------------------------------------------
# interval utilities (shared with scoring; work on any ordered numeric type)
# ---------------------------------------------------------------------------


def merge_intervals(intervals: Iterable[tuple]) -> list[tuple]:
    """Merge intervals that overlap or touch, returning a sorted disjoint list."""
    merged: list[list] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            if end > merged[-1][1]:
                merged[-1][1] = end
        else:
            merged.append([start, end])
    return [(a, b) for a, b in merged]


def interval_covers(merged: Sequence[tuple], point) -> bool:
    """True if ``point`` lies inside one of the sorted disjoint intervals."""
    i = bisect_right(merged, (point,)) - 1
    if i >= 0 and merged[i][0] <= point < merged[i][1]:
        return True
    # bisect on tuples may land on the previous interval when point equals a start
    return i + 1 < len(merged) and merged[i + 1][0] <= point < merged[i + 1][1]


def speaker_intervals(annotation: Annotation) -> dict[str, list[tuple[float, float]]]:
    """Merged (onset, end) intervals per speaker label."""
    raw: dict[str, list[tuple[float, float]]] = {}
    for turn in annotation.turns:
        raw.setdefault(turn.speaker, []).append((turn.onset, turn.end))
    return {label: merge_intervals(ivs) for label, ivs in raw.items()}


def sweep_segments(activity: dict[str, Sequence[tuple]]) -> list[tuple]:
    """Break the timeline at every interval boundary.

    Returns (start, end, active_labels) triples covering every instant where
    at least one boundary-delimited segment exists; segments with no active
    label are omitted.
    """
    points = sorted({p for ivs in activity.values() for iv in ivs for p in iv})
    segments = []
    for t0, t1 in zip(points, points[1:]):
        mid = (t0 + t1) / 2
        active = frozenset(
            label for label, ivs in activity.items() if interval_covers(ivs, mid)
        )
        if active:
            segments.append((t0, t1, active))
    return segments


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def parse_rttm(source: str | Iterable[str]) -> list[Annotation]:
    """Parse RTTM text into one Annotation per recording.

    Blank lines and ";" comments are skipped.  Non-SPEAKER record types are
    ignored (a single warning reports how many).  Recordings appear in order
    of first occurrence; turns keep file order.  Extents are left unset, as
    RTTM does not carry recording length.

    Raises RttmParseError for wrong field counts, non-numeric times,
    negative onsets, or non-positive durations.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    by_recording: dict[str, list[SpeakerTurn]] = {}
    ignored = 0
    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            ignored += 1
            continue
        if len(fields) not in (9, 10):
            raise RttmParseError(
                line_number, f"expected 9 or 10 fields, got {len(fields)}"
            )
        recording_id = fields[1]
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise RttmParseError(
                line_number, f"non-numeric onset/duration: {fields[3]!r} {fields[4]!r}"
            ) from None
        try:
            turn = SpeakerTurn(recording_id, fields[7], onset, duration)
        except ValueError as exc:
            raise RttmParseError(line_number, str(exc)) from None
        by_recording.setdefault(recording_id, []).append(turn)
    if ignored:
        logger.warning("ignored %d non-SPEAKER RTTM records", ignored)
    return [
        Annotation(recording_id, tuple(turns))
        for recording_id, turns in by_recording.items()
    ]


def _format_seconds(value: float) -> str:
    # Decimal of the shortest repr, then half-even at 1 ms: platform-stable
    # and byte-identical across runs.
    return str(Decimal(repr(value)).quantize(_RTTM_QUANTUM, rounding=ROUND_HALF_EVEN))


def write_rttm(annotations: Iterable[Annotation]) -> str:
    """Render annotations as RTTM text (one SPEAKER line per turn).

    Onset/duration carry exactly 3 decimals (round-half-even); channel is
    fixed to "1" and unknown fields to "<NA>".  Output bytes are identical
    across runs and platforms for equal inputs.
    """
    lines = []
    for annotation in annotations:
        for turn in annotation.turns:
            lines.append(
                f"SPEAKER {annotation.recording_id} 1 "
                f"{_format_seconds(turn.onset)} {_format_seconds(turn.duration)} "
                f"<NA> <NA> {turn.speaker} <NA> <NA>"
            )
    return "".join(line + "\n" for line in lines)


def parse_rttm_file(path) -> list[Annotation]:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_rttm(handle)


def write_rttm_file(path, annotations: Iterable[Annotation]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(write_rttm(annotations))


def to_activity(annotation: Annotation, frame_step: float) -> ActivityMatrix:
    """Quantize an annotation onto a frame grid.

    Cell (s, f) is true iff speaker s has any turn overlapping the half-open
    interval [f*step, (f+1)*step).  Frame count is ceil(extent / step).
    """
    if not frame_step > 0:
        raise ValueError(f"frame_step must be positive, got {frame_step}")
    if annotation.extent is None:
        raise ValueError("annotation extent must be set for to_activity")
    n_frames = math.ceil(annotation.extent / frame_step)
    labels = annotation.speakers
    index = {label: i for i, label in enumerate(labels)}
    cells = np.zeros((len(labels), n_frames), dtype=bool)
    for turn in annotation.turns:
        first = int(math.floor(turn.onset / frame_step))
        last = int(math.ceil(turn.end / frame_step)) - 1
        cells[index[turn.speaker], max(first, 0) : min(last, n_frames - 1) + 1] = True
    return ActivityMatrix(frame_step=frame_step, speakers=labels, cells=cells)


def activity_to_annotation(
    matrix: ActivityMatrix, recording_id: str, extent: float | None = None
) -> Annotation:
    """Merge runs of consecutive active frames into turns (inverse of to_activity
    up to one frame_step of boundary quantization)."""
    if extent is None:
        extent = matrix.n_frames * matrix.frame_step
    turns = []
    for row, label in zip(matrix.cells, matrix.speakers):
        padded = np.concatenate(([False], row, [False]))
        edges = np.flatnonzero(padded[1:] != padded[:-1])
        for start, stop in zip(edges[::2], edges[1::2]):
            turns.append(
                SpeakerTurn(
                    recording_id,
                    label,
                    onset=start * matrix.frame_step,
                    duration=(stop - start) * matrix.frame_step,
                )
            )
    turns.sort(key=lambda t: (t.onset, t.speaker))
    return Annotation(recording_id, tuple(turns), extent=extent)


def overlap_components(annotation: Annotation) -> tuple[float, float]:
    """(overlapped seconds, total speech seconds), exact from turn boundaries.

    Overlap counts instants where at least two distinct speakers are active;
    speech counts instants with at least one.
    """
    if annotation.extent is None:
        raise ValueError("annotation extent must be set for overlap statistics")
    overlap = 0.0
    speech = 0.0
    for t0, t1, active in sweep_segments(speaker_intervals(annotation)):
        length = t1 - t0
        speech += length
        if len(active) >= 2:
            overlap += length
    return overlap, speech


def overlap_ratio(annotation: Annotation) -> float:
    """Fraction of speech time where two or more speakers talk at once.

    Defined relative to speech time (not recording time); 0.0 when the
    recording contains no speech.
    """
    overlap, speech = overlap_components(annotation)
    return overlap / speech if speech > 0 else 0.0


def speaker_silence_gaps(annotation: Annotation, speaker: str) -> list[float]:
    """Durations of the pauses between a speaker's consecutive merged turns.

    Turns that touch or overlap are merged first; leading and trailing
    silence are excluded.
    """
    intervals = speaker_intervals(annotation).get(speaker)
    if intervals is None:
        raise ValueError(
            f"speaker {speaker!r} does not appear in {annotation.recording_id!r}"
        )
    return [b0 - a1 for (_, a1), (b0, _) in zip(intervals, intervals[1:])]
