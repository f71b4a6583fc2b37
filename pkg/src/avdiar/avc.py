"""Audio-visual correspondence streams: loading, smoothing, and candidate selection.

The synchronisation network runs offline; this module consumes its output
as per-identity (time, distance, visible) rows, converts distances to
bounded confidences, and selects enrollment candidate windows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AvcStream",
    "FaceTrack",
    "AvcLoadError",
    "load_avc",
    "load_face_tracks",
    "smooth_median",
    "avc_confidence",
    "confident_segments",
    "visible_runs",
]

AVC_COLUMNS = ["time", "identity", "distance", "visible"]
FACE_COLUMNS = AVC_COLUMNS + ["azimuth_deg"]


class AvcLoadError(ValueError):
    """Malformed AVC / face-track CSV content."""


@dataclass(frozen=True)
class AvcStream:
    """Time-ordered correspondence distances for one identity.

    ``distance`` is ignored downstream wherever ``visible`` is false.
    """

    identity: str
    times: np.ndarray
    distances: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise AvcLoadError(f"identity {self.identity!r}: times must be strictly increasing")
        if np.any(self.distances < 0):
            raise AvcLoadError(f"identity {self.identity!r}: negative distance")

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class FaceTrack(AvcStream):
    """AVC stream extended with the face's azimuth on the camera ring."""

    azimuths: np.ndarray

    def at(self, t: float, tolerance: float = 0.1) -> tuple[bool, float | None]:
        """(visible, azimuth_deg) at the sample nearest ``t``; invisible beyond tolerance."""
        if self.times.size == 0:
            return False, None
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > tolerance or not self.visible[idx]:
            return False, None
        return True, float(self.azimuths[idx])


def _parse_rows(text: str, columns: list[str]) -> list[dict[str, str]]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise AvcLoadError("empty CSV: missing header") from None
    if [h.strip() for h in header] != columns:
        raise AvcLoadError(f"unexpected columns {header!r}; expected {columns!r}")
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(columns):
            raise AvcLoadError(f"row {line_no}: expected {len(columns)} fields, got {len(row)}")
        rows.append(dict(zip(columns, (f.strip() for f in row))))
    return rows


def _streams_from_rows(rows, columns, offset_frames, frame_rate):
    shift = offset_frames / frame_rate
    grouped: dict[str, list[dict[str, str]]] = {}
    for row in rows:
        grouped.setdefault(row["identity"], []).append(row)
    streams = {}
    for identity, group in grouped.items():
        try:
            times = np.array([float(r["time"]) + shift for r in group])
            distances = np.array([float(r["distance"]) for r in group])
            visible = np.array([bool(int(r["visible"])) for r in group])
        except ValueError as exc:
            raise AvcLoadError(f"identity {identity!r}: {exc}") from None
        if "azimuth_deg" in columns:
            azimuths = np.array([float(r["azimuth_deg"]) for r in group])
            streams[identity] = FaceTrack(identity, times, distances, visible, azimuths)
        else:
            streams[identity] = AvcStream(identity, times, distances, visible)
    return [streams[k] for k in sorted(streams)]


def load_avc(text: str, offset_frames: int = 0, frame_rate: float = 25.0) -> list[AvcStream]:
    """Parse an AVC CSV (``time,identity,distance,visible``) into per-identity streams.

    ``offset_frames`` applies the session-constant AV offset correction as a
    time shift of ``offset_frames / frame_rate`` seconds.
    """
    return _streams_from_rows(_parse_rows(text, AVC_COLUMNS), AVC_COLUMNS, offset_frames, frame_rate)


def load_face_tracks(text: str) -> list[FaceTrack]:
    """Parse a face-track CSV (AVC schema plus ``azimuth_deg``)."""
    return _streams_from_rows(_parse_rows(text, FACE_COLUMNS), FACE_COLUMNS, 0, 25.0)


def visible_runs(visible: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, end) index runs where visible is true."""
    runs = []
    i = 0
    n = visible.size
    while i < n:
        if visible[i]:
            j = i
            while j + 1 < n and visible[j + 1]:
                j += 1
            runs.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    return runs


def smooth_median(stream: AvcStream, width: int) -> AvcStream:
    """Median-filter distances over contiguous visible runs.

    ``width`` must be odd; windows are centered and shrink symmetrically at
    run edges so they stay odd-sized. Invisible samples break runs and keep
    their raw distance (it is never read downstream).
    """
    if width < 1 or width % 2 == 0:
        raise ValueError(f"width must be odd and >= 1, got {width}")
    half = width // 2
    out = stream.distances.copy()
    for lo, hi in visible_runs(stream.visible):
        run = stream.distances[lo:hi]
        for k in range(run.size):
            reach = min(half, k, run.size - 1 - k)
            out[lo + k] = np.median(run[k - reach : k + reach + 1])
    if isinstance(stream, FaceTrack):
        return FaceTrack(stream.identity, stream.times, out, stream.visible, stream.azimuths)
    return AvcStream(stream.identity, stream.times, out, stream.visible)


def avc_confidence(distance, tau: float = 1.0):
    """Map a correspondence distance to a confidence in (0, 1] via exp(-d/tau)."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return np.exp(-np.asarray(distance, dtype=np.float64) / tau)


def confident_segments(
    stream: AvcStream,
    tau: float = 1.0,
    window: float = 1.5,
    hop: float = 0.75,
    max_overlap: float = 0.5,
) -> list[tuple[float, float, float]]:
    """Candidate (start, end, confidence) windows over visible runs.

    A window slides with ``hop`` inside each visible run; its confidence is
    the mean ``avc_confidence`` of the covered samples. Candidates
    overlapping an already-kept higher-confidence candidate by more than
    ``max_overlap`` of the window length are suppressed (ties keep the
    earlier start).
    """
    candidates = []
    for lo, hi in visible_runs(stream.visible):
        t0, t1 = stream.times[lo], stream.times[hi - 1]
        start = t0
        while start + window <= t1 + 1e-9:
            mask = (stream.times >= start - 1e-9) & (stream.times < start + window - 1e-9)
            mask[:lo] = False
            mask[hi:] = False
            if mask.any():
                conf = float(np.mean(avc_confidence(stream.distances[mask], tau)))
                candidates.append((start, start + window, conf))
            start += hop
    candidates.sort(key=lambda c: (-c[2], c[0]))
    kept: list[tuple[float, float, float]] = []
    for start, end, conf in candidates:
        length = end - start
        clash = any(
            min(end, k_end) - max(start, k_start) > max_overlap * length + 1e-9
            for k_start, k_end, _ in kept
        )
        if not clash:
            kept.append((start, end, conf))
    kept.sort(key=lambda c: c[0])
    return kept
