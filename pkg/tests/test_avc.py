import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avdiar.avc import (
    AvcLoadError,
    AvcStream,
    avc_confidence,
    confident_segments,
    load_avc,
    load_face_tracks,
    smooth_median,
)
from oracles import naive_median_filter


def make_stream(distances, visible=None, identity="id0", dt=0.04):
    distances = np.asarray(distances, dtype=float)
    if visible is None:
        visible = np.ones(distances.size, dtype=bool)
    times = np.arange(distances.size) * dt
    return AvcStream(identity, times, distances, np.asarray(visible, dtype=bool))


def csv_text(rows, header="time,identity,distance,visible"):
    return header + "\n" + "\n".join(rows) + "\n"


class TestLoadAvc:
    def test_two_identities_grouped(self):
        rows = []
        for k in range(100):
            rows.append(f"{k * 0.04:.3f},alice,0.5,1")
            rows.append(f"{k * 0.04:.3f},bob,1.2,1")
        streams = load_avc(csv_text(rows))
        assert [s.identity for s in streams] == ["alice", "bob"]
        assert all(len(s) == 100 for s in streams)

    def test_negative_distance_rejected(self):
        with pytest.raises(AvcLoadError):
            load_avc(csv_text(["0.0,alice,-0.1,1"]))

    def test_invisible_rows_retained_flagged(self):
        streams = load_avc(csv_text(["0.0,alice,0.5,1", "0.04,alice,0.5,0"]))
        assert streams[0].visible.tolist() == [True, False]

    def test_non_monotonic_time_rejected(self):
        with pytest.raises(AvcLoadError, match="increasing"):
            load_avc(csv_text(["0.1,alice,0.5,1", "0.1,alice,0.5,1"]))

    def test_unknown_columns_rejected(self):
        with pytest.raises(AvcLoadError, match="columns"):
            load_avc(csv_text(["0.0,alice,0.5,1,9"], header="time,identity,distance,visible,extra"))

    def test_av_offset_shifts_times(self):
        streams = load_avc(csv_text(["0.0,alice,0.5,1"]), offset_frames=5, frame_rate=25.0)
        assert streams[0].times[0] == pytest.approx(0.2)

    def test_face_tracks_carry_azimuth(self):
        text = "time,identity,distance,visible,azimuth_deg\n0.0,alice,0.5,1,135.0\n"
        tracks = load_face_tracks(text)
        assert tracks[0].azimuths[0] == 135.0
        assert tracks[0].at(0.01) == (True, 135.0)
        assert tracks[0].at(5.0) == (False, None)


class TestSmoothMedian:
    def test_outlier_removed(self):
        out = smooth_median(make_stream([0.1, 0.9, 0.1]), 3)
        assert out.distances[1] == pytest.approx(0.1)

    def test_constant_unchanged(self):
        out = smooth_median(make_stream([0.4] * 10), 5)
        assert np.allclose(out.distances, 0.4)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        for width in (1, 3, 5, 9):
            distances = rng.uniform(0.0, 2.0, size=50)
            visible = rng.uniform(size=50) > 0.3
            stream = make_stream(distances, visible)
            ours = smooth_median(stream, width).distances
            expected = naive_median_filter(distances, visible, width)
            assert np.allclose(ours, expected)

    def test_invisible_breaks_runs(self):
        # outlier adjacent to an invisible sample must not see across it
        stream = make_stream([0.1, 0.1, 9.0, 0.5, 0.5], [True, True, False, True, True])
        out = smooth_median(stream, 3)
        assert out.distances[2] == 9.0  # invisible left untouched
        assert out.distances[3] == pytest.approx(0.5)

    def test_even_width_rejected(self):
        with pytest.raises(ValueError):
            smooth_median(make_stream([0.1]), 2)

    @given(st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=1, max_size=40))
    @settings(max_examples=60, deadline=None)
    def test_median_containment(self, values):
        out = smooth_median(make_stream(values), 5)
        assert out.distances.min() >= min(values) - 1e-12
        assert out.distances.max() <= max(values) + 1e-12

    def test_idempotent_on_monotone(self):
        values = np.linspace(0.1, 2.0, 20)
        once = smooth_median(make_stream(values), 5)
        twice = smooth_median(once, 5)
        assert np.allclose(once.distances, twice.distances)


class TestAvcConfidence:
    def test_zero_distance(self):
        assert avc_confidence(0.0) == pytest.approx(1.0)

    def test_closed_form(self):
        assert avc_confidence(1.0, tau=1.0) == pytest.approx(np.exp(-1.0), abs=1e-9)

    def test_monotone_decreasing(self):
        distances = np.linspace(0.0, 10.0, 50)
        conf = avc_confidence(distances)
        assert np.all(np.diff(conf) < 0)
        assert conf[-1] < 1e-4

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            avc_confidence(1.0, tau=0.0)


class TestConfidentSegments:
    def test_uniform_high_confidence_grid(self):
        stream = make_stream([0.1] * 151)  # 6 s at 25 fps
        candidates = confident_segments(stream)
        starts = [round(c[0], 2) for c in candidates]
        assert starts == [0.0, 0.75, 1.5, 2.25, 3.0, 3.75, 4.5]
        # adjacent windows overlap exactly 50 % and survive suppression
        assert all(b - a == 0.75 for a, b in zip(starts, starts[1:]))

    def test_all_invisible_no_candidates(self):
        stream = make_stream([0.1] * 100, [False] * 100)
        assert confident_segments(stream) == []

    def test_candidates_only_inside_visible_runs(self):
        visible = [True] * 50 + [False] * 10 + [True] * 50
        stream = make_stream([0.1] * 110, visible)
        for start, end, _ in confident_segments(stream):
            inside_first = start >= -1e-9 and end <= 49 * 0.04 + 1e-9
            inside_second = start >= 60 * 0.04 - 1e-9 and end <= 109 * 0.04 + 1e-9
            assert inside_first or inside_second

    def test_top_candidate_overlaps_true_burst(self, small_bundle):
        from avdiar.avc import smooth_median as smooth

        segs = {s.speaker: [] for s in small_bundle.reference}
        for s in small_bundle.reference:
            segs[s.speaker].append((s.onset, s.offset))
        for stream in small_bundle.avc:
            candidates = confident_segments(smooth(stream, 25), tau=0.5)
            assert candidates
            best = max(candidates, key=lambda c: c[2])
            overlaps_own = any(
                min(best[1], off) - max(best[0], on) > 0.5
                for on, off in segs[stream.identity]
            )
            assert overlaps_own

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        stream = make_stream(rng.uniform(0, 2, size=200), rng.uniform(size=200) > 0.2)
        a = confident_segments(stream)
        b = confident_segments(stream)
        assert a == b
