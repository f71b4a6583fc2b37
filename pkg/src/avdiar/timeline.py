"""Labelled time intervals, timeline algebra, and RTTM serialization.

Time is stored as integer milliseconds internally so that interval
arithmetic (gap merging, collar exclusion, overlap accumulation) is exact;
all public constructors and accessors work in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

__all__ = [
    "Segment",
    "Timeline",
    "RttmParseError",
    "parse_rttm",
    "emit_rttm",
    "merge_gaps",
    "merge_label_runs",
    "speech_support",
    "extend_tail_windows",
    "timeline_from_labeled_windows",
]


def to_ms(seconds: float) -> int:
    """Round a time in seconds to the internal millisecond clock."""
    return int(round(float(seconds) * 1000.0))


class RttmParseError(ValueError):
    """Malformed RTTM input; carries the offending 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"RTTM line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Segment:
    """A speaker-labelled interval [onset, onset + duration), in integer ms."""

    onset_ms: int
    duration_ms: int
    speaker: str

    def __post_init__(self):
        if self.onset_ms < 0:
            raise ValueError(f"segment onset must be >= 0, got {self.onset_ms} ms")
        if self.duration_ms <= 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration_ms} ms")
        if not self.speaker or self.speaker.split() != [self.speaker]:
            raise ValueError(f"speaker label must be non-empty without whitespace: {self.speaker!r}")

    @classmethod
    def from_seconds(cls, onset: float, duration: float, speaker: str) -> "Segment":
        return cls(to_ms(onset), to_ms(duration), speaker)

    @property
    def onset(self) -> float:
        return self.onset_ms / 1000.0

    @property
    def duration(self) -> float:
        return self.duration_ms / 1000.0

    @property
    def offset_ms(self) -> int:
        return self.onset_ms + self.duration_ms

    @property
    def offset(self) -> float:
        return self.offset_ms / 1000.0


@dataclass(frozen=True)
class Timeline:
    """An ordered set of segments for one recording.

    Segments are kept sorted by onset. Within a single speaker label
    segments must not overlap; overlap across different speakers is legal
    (references may contain it).
    """

    segments: tuple[Segment, ...]
    source_id: str

    def __post_init__(self):
        if not self.source_id or self.source_id.split() != [self.source_id]:
            raise ValueError(f"source_id must be non-empty without whitespace: {self.source_id!r}")
        ordered = tuple(sorted(self.segments, key=lambda s: (s.onset_ms, s.speaker, s.offset_ms)))
        object.__setattr__(self, "segments", ordered)
        last_offset: dict[str, int] = {}
        for seg in ordered:
            if seg.speaker in last_offset and seg.onset_ms < last_offset[seg.speaker]:
                raise ValueError(
                    f"segments for speaker {seg.speaker!r} overlap at {seg.onset:.3f}s"
                )
            last_offset[seg.speaker] = max(last_offset.get(seg.speaker, 0), seg.offset_ms)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)

    def speakers(self) -> set[str]:
        return {s.speaker for s in self.segments}

    def per_speaker(self) -> dict[str, list[Segment]]:
        """Segments grouped by speaker, each group sorted by onset."""
        groups: dict[str, list[Segment]] = {}
        for seg in self.segments:
            groups.setdefault(seg.speaker, []).append(seg)
        return groups

    def speech_ms(self) -> int:
        """Total labelled time in ms, counting overlapped speech per speaker."""
        return sum(s.duration_ms for s in self.segments)

    def extent_ms(self) -> int:
        """Offset of the last segment in ms (0 for an empty timeline)."""
        return max((s.offset_ms for s in self.segments), default=0)


def parse_rttm(text: str, source_id: str | None = None) -> Timeline:
    """Parse an RTTM document into a Timeline.

    Only SPEAKER rows are consumed (field 4 = onset, field 5 = duration,
    field 8 = speaker); rows with other type tags and ``;;`` comments are
    ignored. ``source_id`` is used only when the document has no SPEAKER
    rows; otherwise the file id column must be consistent.
    """
    segments: list[Segment] = []
    sid: str | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";;"):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            continue
        if len(fields) < 9:
            raise RttmParseError(line_no, f"expected >= 9 fields, got {len(fields)}")
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise RttmParseError(
                line_no, f"non-numeric onset/duration: {fields[3]!r} {fields[4]!r}"
            ) from None
        if sid is None:
            sid = fields[1]
        elif fields[1] != sid:
            raise RttmParseError(line_no, f"mixed file ids: {fields[1]!r} vs {sid!r}")
        try:
            segments.append(Segment.from_seconds(onset, duration, fields[7]))
        except ValueError as exc:
            raise RttmParseError(line_no, str(exc)) from None
    if sid is None:
        sid = source_id if source_id else "unknown"
    return Timeline(tuple(segments), sid)


def emit_rttm(t: Timeline) -> str:
    """Serialize a Timeline as RTTM with 3-decimal times, sorted by (onset, speaker)."""
    lines = [
        f"SPEAKER {t.source_id} 1 {seg.onset:.3f} {seg.duration:.3f} <NA> <NA> {seg.speaker} <NA> <NA>"
        for seg in sorted(t.segments, key=lambda s: (s.onset_ms, s.speaker))
    ]
    return "".join(line + "\n" for line in lines)


def merge_gaps(t: Timeline, gap_tolerance: float) -> Timeline:
    """Coalesce same-speaker segments separated by at most ``gap_tolerance`` seconds."""
    if gap_tolerance < 0:
        raise ValueError(f"gap_tolerance must be >= 0, got {gap_tolerance}")
    tol_ms = to_ms(gap_tolerance)
    merged: list[Segment] = []
    for speaker, segs in t.per_speaker().items():
        cur_on, cur_off = segs[0].onset_ms, segs[0].offset_ms
        for seg in segs[1:]:
            if seg.onset_ms - cur_off <= tol_ms:
                cur_off = max(cur_off, seg.offset_ms)
            else:
                merged.append(Segment(cur_on, cur_off - cur_on, speaker))
                cur_on, cur_off = seg.onset_ms, seg.offset_ms
        merged.append(Segment(cur_on, cur_off - cur_on, speaker))
    return Timeline(tuple(merged), t.source_id)


def merge_label_runs(t: Timeline, gap_tolerance: float) -> Timeline:
    """Like ``merge_gaps`` but only across gaps with no intervening segment.

    Decision stages emit one label per instant; merging a speaker across a
    gap occupied by another speaker would create cross-speaker overlap, so
    here a segment only extends the run when it directly follows a
    same-label segment in global time order.
    """
    if gap_tolerance < 0:
        raise ValueError(f"gap_tolerance must be >= 0, got {gap_tolerance}")
    tol_ms = to_ms(gap_tolerance)
    out: list[Segment] = []
    for seg in sorted(t.segments, key=lambda s: (s.onset_ms, s.speaker)):
        if (
            out
            and out[-1].speaker == seg.speaker
            and seg.onset_ms - out[-1].offset_ms <= tol_ms
        ):
            prev = out.pop()
            off = max(prev.offset_ms, seg.offset_ms)
            out.append(Segment(prev.onset_ms, off - prev.onset_ms, seg.speaker))
        else:
            out.append(seg)
    return Timeline(tuple(out), t.source_id)


def speech_support(t: Timeline, label: str = "speech") -> Timeline:
    """Union of all labelled intervals, relabelled as a single-speaker timeline."""
    intervals = sorted((s.onset_ms, s.offset_ms) for s in t.segments)
    merged: list[Segment] = []
    for on, off in intervals:
        if merged and on <= merged[-1].offset_ms:
            last = merged.pop()
            on, off = last.onset_ms, max(last.offset_ms, off)
        merged.append(Segment(on, off - on, label))
    return Timeline(tuple(merged), t.source_id)


def extend_tail_windows(
    windows: Sequence[tuple[float, float, str]], speech: Timeline
) -> list[tuple[float, float, str]]:
    """Stretch the last window inside each speech segment to the segment end.

    Windowing drops a trailing remainder shorter than the minimum window;
    decisions should still label all detected speech, so that remainder is
    handed to the final window's label.
    """
    out = list(windows)
    for seg in speech:
        inside = [
            k for k, (start, end, _) in enumerate(out)
            if start >= seg.onset - 1e-9 and end <= seg.offset + 1e-9
        ]
        if inside:
            last = max(inside, key=lambda k: out[k][0])
            start, end, label = out[last]
            out[last] = (start, max(end, seg.offset), label)
    return out


def timeline_from_labeled_windows(
    windows: Sequence[tuple[float, float, str]], source_id: str
) -> Timeline:
    """Resolve overlapping labelled windows into a single-label-per-instant timeline.

    Windows with a 0.75 s hop and 1.5 s length overlap pairwise; each window
    owns the span from its start to the next window's start (the later
    window wins on the shared half), and the last window of a contiguous
    run owns through its own end.
    """
    ordered = sorted(windows, key=lambda w: (w[0], w[1]))
    pieces: list[Segment] = []
    for k, (start, end, label) in enumerate(ordered):
        own_end = min(end, ordered[k + 1][0]) if k + 1 < len(ordered) else end
        on_ms, off_ms = to_ms(start), to_ms(own_end)
        if off_ms > on_ms:
            pieces.append(Segment(on_ms, off_ms - on_ms, label))
    return Timeline(tuple(pieces), source_id)
