"""Data model, RTTM round trips, and timeline algebra."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diarlab.annotations import (
    ActivityMatrix,
    Annotation,
    RttmParseError,
    SpeakerTurn,
    activity_to_annotation,
    merge_intervals,
    overlap_components,
    overlap_ratio,
    parse_rttm,
    speaker_silence_gaps,
    to_activity,
    write_rttm,
)


def turn(speaker, onset, duration, rec="rec1"):
    return SpeakerTurn(rec, speaker, onset, duration)


class TestTypes:
    def test_turn_invariants(self):
        with pytest.raises(ValueError):
            turn("a", -0.1, 1.0)
        with pytest.raises(ValueError):
            turn("a", 0.0, 0.0)
        with pytest.raises(ValueError):
            turn("a", 0.0, -1.0)
        with pytest.raises(ValueError):
            turn("", 0.0, 1.0)
        with pytest.raises(ValueError):
            turn("a b", 0.0, 1.0)
        with pytest.raises(ValueError):
            turn("a", float("nan"), 1.0)

    def test_annotation_invariants(self):
        with pytest.raises(ValueError):
            Annotation("rec1", (turn("a", 0, 1, rec="other"),))
        with pytest.raises(ValueError):
            Annotation("rec1", (turn("a", 0, 5),), extent=4.0)
        ann = Annotation("rec1", (turn("a", 0, 1), turn("b", 2, 1), turn("a", 4, 1)))
        assert ann.speaker_count == 2
        assert ann.speakers == ("a", "b")


class TestRttmParse:
    def test_single_line(self):
        anns = parse_rttm("SPEAKER rec1 1 0.00 2.50 <NA> <NA> alice <NA> <NA>")
        assert len(anns) == 1
        assert anns[0].turns == (turn("alice", 0.0, 2.5),)

    def test_empty_input(self):
        assert parse_rttm("") == []

    def test_negative_duration_errors_with_line_number(self):
        with pytest.raises(RttmParseError) as info:
            parse_rttm("SPEAKER rec1 1 0.0 -1.0 <NA> <NA> a <NA> <NA>")
        assert info.value.line_number == 1

    def test_bad_field_count(self):
        with pytest.raises(RttmParseError):
            parse_rttm("SPEAKER rec1 1 0.0")

    def test_non_numeric(self):
        with pytest.raises(RttmParseError) as info:
            parse_rttm("\nSPEAKER rec1 1 zero 1.0 <NA> <NA> a <NA> <NA>")
        assert info.value.line_number == 2

    def test_comments_blanks_and_foreign_records(self, caplog):
        text = (
            "; a comment\n"
            "\n"
            "SPKR-INFO rec1 1 <NA> <NA> <NA> unknown a <NA>\n"
            "SPEAKER rec1 1 1.0 1.0 <NA> <NA> a <NA> <NA>\n"
        )
        with caplog.at_level("WARNING"):
            anns = parse_rttm(text)
        assert len(anns) == 1 and len(anns[0].turns) == 1
        assert any("1 non-SPEAKER" in r.message for r in caplog.records)

    def test_grouping_by_first_appearance(self):
        text = (
            "SPEAKER r2 1 0.0 1.0 <NA> <NA> a <NA> <NA>\n"
            "SPEAKER r1 1 0.0 1.0 <NA> <NA> a <NA> <NA>\n"
            "SPEAKER r2 1 2.0 1.0 <NA> <NA> b <NA> <NA>\n"
        )
        anns = parse_rttm(text)
        assert [a.recording_id for a in anns] == ["r2", "r1"]
        assert len(anns[0].turns) == 2


class TestRttmWrite:
    def test_exact_line(self):
        ann = Annotation("r", (turn("s", 1.0, 2.0, rec="r"),))
        assert write_rttm([ann]) == "SPEAKER r 1 1.000 2.000 <NA> <NA> s <NA> <NA>\n"

    def test_round_half_even(self):
        ann = Annotation(
            "r",
            (
                turn("s", 0.0005, 1.0015, rec="r"),
                turn("s", 0.0025, 1.0, rec="r"),
            ),
        )
        lines = write_rttm([ann]).splitlines()
        assert lines[0].split()[3:5] == ["0.000", "1.002"]
        assert lines[1].split()[3] == "0.002"

    def test_round_trip_pair(self):
        ann = Annotation(
            "rec1",
            (turn("a", 0.25, 2.125), turn("b", 1.5, 0.75), turn("a", 10.0, 0.001)),
        )
        assert parse_rttm(write_rttm([ann])) == [ann]

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_round_trip_property(self, data):
        # ms-grid times: 3-decimal rendering is lossless there
        n = data.draw(st.integers(1, 8))
        turns = []
        for i in range(n):
            onset = data.draw(st.integers(0, 10_000_000))
            duration = data.draw(st.integers(1, 1_000_000))
            label = data.draw(st.sampled_from(["a", "b", "spk_1", "x9"]))
            turns.append(turn(label, onset / 1000.0, duration / 1000.0))
        ann = Annotation("rec1", tuple(turns))
        assert parse_rttm(write_rttm([ann])) == [ann]


class TestToActivity:
    def test_short_turn_over_three_frames(self):
        ann = Annotation("r", (turn("a", 0.0, 0.25, rec="r"),), extent=1.0)
        matrix = to_activity(ann, 0.1)
        assert matrix.n_frames == 10
        assert matrix.cells[0].tolist() == [True] * 3 + [False] * 7

    def test_no_turns(self):
        ann = Annotation("r", (), extent=1.0)
        matrix = to_activity(ann, 0.1)
        assert matrix.cells.shape == (0, 10)

    def test_two_speakers_fully_overlapping(self):
        ann = Annotation(
            "r", (turn("a", 0.0, 1.0, rec="r"), turn("b", 0.0, 1.0, rec="r")), extent=1.0
        )
        matrix = to_activity(ann, 0.1)
        assert matrix.cells.all() and matrix.cells.shape == (2, 10)

    def test_requires_extent(self):
        with pytest.raises(ValueError):
            to_activity(Annotation("r", (turn("a", 0, 1, rec="r"),)), 0.1)

    def test_round_trip_within_one_step(self):
        ann = Annotation(
            "r",
            (turn("a", 0.32, 1.17, rec="r"), turn("b", 0.9, 0.55, rec="r")),
            extent=3.0,
        )
        step = 0.05
        back = activity_to_annotation(to_activity(ann, step), "r")
        for original, recovered in zip(ann.turns, sorted(back.turns, key=lambda t: t.onset)):
            assert abs(recovered.onset - original.onset) <= step
            assert abs(recovered.end - original.end) <= step

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_coarse_fine_agreement(self, data):
        # 2-step frames with no interior boundary agree with 1-step frames
        fine = 0.05
        n = data.draw(st.integers(1, 5))
        turns = [
            turn(
                f"s{data.draw(st.integers(0, 2))}",
                data.draw(st.integers(0, 4000)) / 1000.0,
                data.draw(st.integers(1, 2000)) / 1000.0,
            )
            for _ in range(n)
        ]
        ann = Annotation("rec1", tuple(turns), extent=8.0)
        fine_m = to_activity(ann, fine)
        coarse_m = to_activity(ann, 2 * fine)
        boundaries = [b for t in ann.turns for b in (t.onset, t.end)]
        for f2 in range(coarse_m.n_frames):
            lo, hi = f2 * 2 * fine, (f2 + 1) * 2 * fine
            if any(lo < b < hi for b in boundaries):
                continue
            for row_fine, row_coarse in zip(fine_m.cells, coarse_m.cells):
                assert row_coarse[f2] == row_fine[2 * f2] == row_fine[2 * f2 + 1]


class TestOverlap:
    def test_single_speaker(self):
        ann = Annotation("r", (turn("a", 0, 10, rec="r"),), extent=10.0)
        assert overlap_ratio(ann) == 0.0

    def test_half_overlap(self):
        # hand sweep: overlap on [5,10) = 5 s, speech on [0,10) = 10 s
        ann = Annotation(
            "r", (turn("a", 0, 10, rec="r"), turn("b", 5, 5, rec="r")), extent=10.0
        )
        assert overlap_ratio(ann) == 0.5
        assert overlap_components(ann) == (5.0, 10.0)

    def test_identical_speakers(self):
        ann = Annotation(
            "r", (turn("a", 0, 10, rec="r"), turn("b", 0, 10, rec="r")), extent=10.0
        )
        assert overlap_ratio(ann) == 1.0

    def test_no_speech(self):
        assert overlap_ratio(Annotation("r", (), extent=5.0)) == 0.0

    def test_same_speaker_self_overlap_is_not_overlap(self):
        ann = Annotation(
            "r", (turn("a", 0, 6, rec="r"), turn("a", 4, 6, rec="r")), extent=10.0
        )
        assert overlap_ratio(ann) == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_relabeling_and_translation_invariance(self, data):
        n = data.draw(st.integers(1, 6))
        turns = [
            turn(
                f"s{data.draw(st.integers(0, 3))}",
                data.draw(st.integers(0, 20_000)) / 1000.0,
                data.draw(st.integers(1, 5_000)) / 1000.0,
            )
            for _ in range(n)
        ]
        ann = Annotation("rec1", tuple(turns), extent=40.0)
        relabeled = Annotation(
            "rec1",
            tuple(
                SpeakerTurn("rec1", "x_" + t.speaker, t.onset, t.duration)
                for t in ann.turns
            ),
            extent=40.0,
        )
        assert overlap_ratio(relabeled) == overlap_ratio(ann)
        shift = data.draw(st.integers(1, 10))
        translated = Annotation(
            "rec1",
            tuple(
                SpeakerTurn("rec1", t.speaker, t.onset + shift, t.duration)
                for t in ann.turns
            ),
            extent=40.0 + shift,
        )
        assert overlap_ratio(translated) == pytest.approx(overlap_ratio(ann), abs=1e-12)


class TestSilenceGaps:
    def test_two_turns(self):
        ann = Annotation("r", (turn("a", 0, 2, rec="r"), turn("a", 4, 2, rec="r")))
        assert speaker_silence_gaps(ann, "a") == [2.0]

    def test_single_turn(self):
        ann = Annotation("r", (turn("a", 0, 2, rec="r"),))
        assert speaker_silence_gaps(ann, "a") == []

    def test_merge_then_diff(self):
        ann = Annotation(
            "r",
            (
                turn("a", 0, 2, rec="r"),
                turn("a", 1, 2, rec="r"),
                turn("a", 5, 1, rec="r"),
            ),
        )
        assert speaker_silence_gaps(ann, "a") == [2.0]

    def test_touching_turns_merge(self):
        ann = Annotation("r", (turn("a", 0, 2, rec="r"), turn("a", 2, 2, rec="r")))
        assert speaker_silence_gaps(ann, "a") == []

    def test_unknown_speaker(self):
        ann = Annotation("r", (turn("a", 0, 2, rec="r"),))
        with pytest.raises(ValueError):
            speaker_silence_gaps(ann, "zz")

    @settings(max_examples=50, deadline=None)
    @given(st.permutations(list(range(6))))
    def test_order_independence(self, order):
        base = [
            turn("a", 0, 2),
            turn("a", 3, 1),
            turn("b", 1, 4),
            turn("a", 7, 2),
            turn("a", 8, 3),
            turn("b", 9, 1),
        ]
        shuffled = Annotation("rec1", tuple(base[i] for i in order))
        assert speaker_silence_gaps(shuffled, "a") == [1.0, 3.0]
        assert speaker_silence_gaps(shuffled, "b") == [4.0]


def test_merge_intervals():
    assert merge_intervals([(3, 4), (0, 1), (1, 2)]) == [(0, 2), (3, 4)]
    assert merge_intervals([]) == []
    assert merge_intervals([(0, 5), (1, 2)]) == [(0, 5)]
