"""DER scoring with overlap handling and a forgiveness collar, optimal
speaker mapping, speaker-counting error, and per-speaker-count reports.

All interval arithmetic runs on exact rationals (input floats converted
losslessly), so scores are order-independent and golden values reproduce
with zero tolerance.  The speaker mapping is computed on the same timeline
that is scored: collar-excluded and, when overlap scoring is off,
overlap-excluded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annotations import Annotation, interval_covers, merge_intervals

_ZERO = Fraction(0)


@dataclass(frozen=True)
class ScoringConfig:
    """Collar is the half-width of the no-score zone around every reference
    turn boundary; score_overlap=False drops instants with two or more
    reference speakers."""

    collar: float = 0.0
    score_overlap: bool = True

    def __post_init__(self):
        if self.collar < 0:
            raise ValueError(f"collar must be non-negative, got {self.collar}")


@dataclass(frozen=True)
class DERBreakdown:
    """Error seconds (exact rationals) over reference speech counted with
    overlap multiplicity.  der may exceed 1 through false alarms."""

    missed: Fraction = _ZERO
    false_alarm: Fraction = _ZERO
    confusion: Fraction = _ZERO
    scored_speech: Fraction = _ZERO

    def __add__(self, other: "DERBreakdown") -> "DERBreakdown":
        return DERBreakdown(
            self.missed + other.missed,
            self.false_alarm + other.false_alarm,
            self.confusion + other.confusion,
            self.scored_speech + other.scored_speech,
        )

    @property
    def total_error(self) -> Fraction:
        return self.missed + self.false_alarm + self.confusion

    @property
    def der(self) -> float:
        if self.scored_speech == 0:
            return 0.0 if self.total_error == 0 else float("inf")
        return float(self.total_error / self.scored_speech)

    def to_dict(self) -> dict:
        der = self.der
        return {
            "missed": float(self.missed),
            "false_alarm": float(self.false_alarm),
            "confusion": float(self.confusion),
            "scored_speech": float(self.scored_speech),
            "der": der if der != float("inf") else None,
        }


@dataclass(frozen=True)
class GroupScore:
    breakdown: DERBreakdown
    msce: float
    n_recordings: int


@dataclass(frozen=True)
class ScoreReport:
    """Per-recording breakdowns, a pooled breakdown (components summed
    before dividing), and per-speaker-count groups with MSCE (per-recording
    mean of |estimated - true| within each group)."""

    per_file: dict[str, DERBreakdown]
    pooled: DERBreakdown
    groups: dict[str, GroupScore]

    def to_dict(self) -> dict:
        return {
            "per_file": {
                rid: self.per_file[rid].to_dict() for rid in sorted(self.per_file)
            },
            "pooled": self.pooled.to_dict(),
            "groups": {
                key: {
                    "n_recordings": group.n_recordings,
                    "msce": group.msce,
                    **group.breakdown.to_dict(),
                }
                for key, group in sorted(
                    self.groups.items(), key=lambda kv: (len(kv[0]), kv[0])
                )
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        header = f"{'group':>6} {'files':>6} {'DER%':>8} {'miss%':>8} {'fa%':>8} {'conf%':>8} {'MSCE':>6}"
        lines = [header, "-" * len(header)]

        def row(key: str, breakdown: DERBreakdown, msce, count: int) -> str:
            scored = breakdown.scored_speech
            if scored > 0:
                pct = lambda x: f"{100.0 * float(x / scored):8.2f}"  # noqa: E731
            else:
                pct = lambda x: f"{'n/a':>8}"  # noqa: E731
            msce_text = f"{msce:6.2f}" if msce is not None else f"{'':6}"
            return (
                f"{key:>6} {count:>6} {pct(breakdown.total_error)} "
                f"{pct(breakdown.missed)} {pct(breakdown.false_alarm)} "
                f"{pct(breakdown.confusion)} {msce_text}"
            )

        for key, group in sorted(self.groups.items(), key=lambda kv: (len(kv[0]), kv[0])):
            lines.append(row(key, group.breakdown, group.msce, group.n_recordings))
        lines.append("-" * len(header))
        lines.append(row("all", self.pooled, None, len(self.per_file)))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# exact timeline machinery
# ---------------------------------------------------------------------------


def _exact_intervals(annotation: Annotation) -> dict[str, list[tuple[Fraction, Fraction]]]:
    raw: dict[str, list[tuple[Fraction, Fraction]]] = {}
    for turn in annotation.turns:
        onset = Fraction(turn.onset)
        raw.setdefault(turn.speaker, []).append((onset, onset + Fraction(turn.duration)))
    return {label: merge_intervals(ivs) for label, ivs in raw.items()}


def _exclusion_zones(
    ref: Annotation, ref_activity: Mapping[str, list], config: ScoringConfig
) -> list[tuple[Fraction, Fraction]]:
    zones: list[tuple[Fraction, Fraction]] = []
    if config.collar > 0:
        collar = Fraction(config.collar)
        for turn in ref.turns:
            for boundary in (Fraction(turn.onset), Fraction(turn.onset) + Fraction(turn.duration)):
                zones.append((boundary - collar, boundary + collar))
    if not config.score_overlap:
        zones.extend(_count_regions(ref_activity, minimum=2))
    return merge_intervals(zones)


def _count_regions(activity: Mapping[str, list], minimum: int) -> list[tuple[Fraction, Fraction]]:
    events: list[tuple[Fraction, int]] = []
    for intervals in activity.values():
        for start, end in intervals:
            events.append((start, 1))
            events.append((end, -1))
    events.sort()
    regions = []
    depth = 0
    region_start = None
    for time, delta in events:
        depth += delta
        if depth >= minimum and region_start is None:
            region_start = time
        elif depth < minimum and region_start is not None:
            if time > region_start:
                regions.append((region_start, time))
            region_start = None
    return regions


@dataclass(frozen=True)
class _Timeline:
    """Elementary scored segments: (start, end, ref labels, hyp labels)."""

    segments: tuple[tuple[Fraction, Fraction, frozenset, frozenset], ...]


def _build_timeline(ref: Annotation, hyp: Annotation, config: ScoringConfig) -> _Timeline:
    ref_activity = _exact_intervals(ref)
    hyp_activity = _exact_intervals(hyp)
    exclusions = _exclusion_zones(ref, ref_activity, config)
    points = set()
    for activity in (ref_activity, hyp_activity):
        for intervals in activity.values():
            for interval in intervals:
                points.update(interval)
    for interval in exclusions:
        points.update(interval)
    ordered = sorted(points)
    segments = []
    for t0, t1 in zip(ordered, ordered[1:]):
        midpoint = (t0 + t1) / 2
        if interval_covers(exclusions, midpoint):
            continue
        ref_active = frozenset(
            label for label, ivs in ref_activity.items() if interval_covers(ivs, midpoint)
        )
        hyp_active = frozenset(
            label for label, ivs in hyp_activity.items() if interval_covers(ivs, midpoint)
        )
        if ref_active or hyp_active:
            segments.append((t0, t1, ref_active, hyp_active))
    return _Timeline(tuple(segments))


def _cooccurrence(
    timeline: _Timeline,
) -> tuple[list[str], list[str], dict[tuple[str, str], Fraction]]:
    ref_labels: set[str] = set()
    hyp_labels: set[str] = set()
    matrix: dict[tuple[str, str], Fraction] = {}
    for t0, t1, ref_active, hyp_active in timeline.segments:
        length = t1 - t0
        ref_labels.update(ref_active)
        hyp_labels.update(hyp_active)
        for r in ref_active:
            for h in hyp_active:
                matrix[r, h] = matrix.get((r, h), _ZERO) + length
    return sorted(ref_labels), sorted(hyp_labels), matrix


def _assign(timeline: _Timeline) -> dict[str, str]:
    ref_labels, hyp_labels, matrix = _cooccurrence(timeline)
    if not ref_labels or not hyp_labels:
        return {}
    gain = np.zeros((len(ref_labels), len(hyp_labels)))
    for (r, h), value in matrix.items():
        gain[ref_labels.index(r), hyp_labels.index(h)] = float(value)
    rows, cols = linear_sum_assignment(gain, maximize=True)
    mapping = {}
    for r, h in zip(rows, cols):
        if matrix.get((ref_labels[r], hyp_labels[h]), _ZERO) > 0:
            mapping[hyp_labels[h]] = ref_labels[r]
    return mapping


def optimal_speaker_map(
    ref: Annotation, hyp: Annotation, config: ScoringConfig | None = None
) -> dict[str, str]:
    """Injective partial map hypothesis label -> reference label maximizing
    total co-occurring speech time (rectangular assignment problem).

    Pairs with zero co-occurrence stay unmapped.  The map is computed on the
    scored timeline of ``config`` (default: no collar, overlaps kept).
    """
    return _assign(_build_timeline(ref, hyp, config or ScoringConfig()))


def compute_der(ref: Annotation, hyp: Annotation, config: ScoringConfig | None = None) -> DERBreakdown:
    """Timeline-swept DER decomposition.

    Per elementary segment with n_ref/n_hyp active speakers and n_correct
    correctly mapped ones: missed = max(0, n_ref - n_hyp), false alarm =
    max(0, n_hyp - n_ref), confusion = min(n_ref, n_hyp) - n_correct, and
    scored speech integrates n_ref.  Collar zones around reference turn
    boundaries are excluded from every integral.
    """
    if config is None:
        config = ScoringConfig()
    if ref.extent is None:
        raise ValueError(f"reference {ref.recording_id!r} has no extent")
    timeline = _build_timeline(ref, hyp, config)
    ref_to_hyp = {r: h for h, r in _assign(timeline).items()}
    missed = false_alarm = confusion = scored = _ZERO
    for t0, t1, ref_active, hyp_active in timeline.segments:
        length = t1 - t0
        n_ref = len(ref_active)
        n_hyp = len(hyp_active)
        n_correct = sum(1 for r in ref_active if ref_to_hyp.get(r) in hyp_active)
        scored += n_ref * length
        missed += max(0, n_ref - n_hyp) * length
        false_alarm += max(0, n_hyp - n_ref) * length
        confusion += (min(n_ref, n_hyp) - n_correct) * length
    return DERBreakdown(missed, false_alarm, confusion, scored)


def msce(
    pairs: Iterable[tuple[int, int]], group_by_ref_count: bool = True
) -> dict[int | str, float]:
    """Mean absolute speaker-counting error, grouped by true count (or
    pooled under the key "all").  Empty groups are simply absent."""
    groups: dict[int | str, list[int]] = {}
    for ref_count, hyp_count in pairs:
        if ref_count < 0 or hyp_count < 0:
            raise ValueError("speaker counts must be non-negative")
        key: int | str = ref_count if group_by_ref_count else "all"
        groups.setdefault(key, []).append(abs(hyp_count - ref_count))
    return {
        key: sum(errors) / len(errors)
        for key, errors in sorted(groups.items(), key=lambda kv: str(kv[0]))
    }


def _group_key(count: int) -> str:
    return str(count) if count <= 8 else "9+"


def grouped_report(
    refs: Sequence[Annotation],
    hyps: Sequence[Annotation],
    config: ScoringConfig | None = None,
) -> ScoreReport:
    """Pair recordings by id and build per-file, pooled, and per-group
    scores; counts above 8 pool into the "9+" group."""
    if config is None:
        config = ScoringConfig()
    ref_by_id = {a.recording_id: a for a in refs}
    hyp_by_id = {a.recording_id: a for a in hyps}
    missing_hyp = sorted(set(ref_by_id) - set(hyp_by_id))
    missing_ref = sorted(set(hyp_by_id) - set(ref_by_id))
    if missing_hyp or missing_ref:
        raise ValueError(
            f"unpaired recordings: missing hypotheses {missing_hyp}, "
            f"missing references {missing_ref}"
        )
    per_file: dict[str, DERBreakdown] = {}
    group_breakdowns: dict[str, DERBreakdown] = {}
    group_count_pairs: dict[str, list[tuple[int, int]]] = {}
    for recording_id in sorted(ref_by_id):
        ref = ref_by_id[recording_id]
        hyp = hyp_by_id[recording_id]
        breakdown = compute_der(ref, hyp, config)
        per_file[recording_id] = breakdown
        key = _group_key(ref.speaker_count)
        group_breakdowns[key] = group_breakdowns.get(key, DERBreakdown()) + breakdown
        group_count_pairs.setdefault(key, []).append(
            (ref.speaker_count, hyp.speaker_count)
        )
    groups = {
        key: GroupScore(
            breakdown=group_breakdowns[key],
            msce=sum(abs(h - r) for r, h in group_count_pairs[key])
            / len(group_count_pairs[key]),
            n_recordings=len(group_count_pairs[key]),
        )
        for key in group_breakdowns
    }
    pooled = sum(per_file.values(), DERBreakdown())
    return ScoreReport(per_file=per_file, pooled=pooled, groups=groups)
