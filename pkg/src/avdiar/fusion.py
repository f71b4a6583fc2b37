"""Weighted multimodal fusion and the windowed decision stage.

Per window and identity the overall score is

    C_overall = C_sm + alpha * C_avc + beta * cos(phi - theta)

where the second and third terms are zeroed whenever the identity is not
visible (and the third additionally when no direction estimate exists).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .avc import AvcStream, FaceTrack, avc_confidence
from .localization import DoAEstimate, doa_term
from .timeline import (
    Segment,
    Timeline,
    extend_tail_windows,
    merge_label_runs,
    timeline_from_labeled_windows,
)

__all__ = [
    "FusionWeights",
    "IdentityScores",
    "FusionFrame",
    "fuse",
    "decide",
]

UNKNOWN_LABEL = "unknown"


@dataclass(frozen=True)
class FusionWeights:
    alpha: float
    beta: float

    def __post_init__(self):
        for name, value in (("alpha", self.alpha), ("beta", self.beta)):
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class IdentityScores:
    """Per-identity terms for one window; gated terms are stored post-gating."""

    c_sm: float
    c_avc: float  # 0 when the identity is not visible
    doa: float  # 0 when not visible or no direction estimate
    visible: bool
    c_overall: float


@dataclass(frozen=True)
class FusionFrame:
    start: float
    end: float
    scores: dict[str, IdentityScores]


def _window_confidence(stream: AvcStream, start: float, end: float, tau: float) -> float:
    """Mean AV confidence of the visible samples inside [start, end)."""
    mask = (stream.times >= start - 1e-9) & (stream.times < end - 1e-9) & stream.visible
    if not mask.any():
        return 0.0
    return float(np.mean(avc_confidence(stream.distances[mask], tau)))


def fuse(
    window: tuple[float, float],
    c_sm_map: dict[str, float],
    avc_streams: dict[str, AvcStream],
    doa: DoAEstimate | None,
    faces: dict[str, FaceTrack],
    weights: FusionWeights,
    tau: float = 1.0,
) -> FusionFrame:
    """Combine speaker-model, AV-correspondence, and direction scores for one window.

    ``c_sm_map`` must contain every identity (identities whose enrollment
    failed carry 0 so the visual terms alone can rank them). Visibility and
    the face azimuth are read from the face track at the window midpoint.
    """
    start, end = window
    mid = 0.5 * (start + end)
    scores: dict[str, IdentityScores] = {}
    for identity, c_sm in c_sm_map.items():
        visible, phi = faces[identity].at(mid) if identity in faces else (False, None)
        c_avc = 0.0
        if visible and identity in avc_streams:
            c_avc = _window_confidence(avc_streams[identity], start, end, tau)
        direction = 0.0
        if visible and phi is not None and doa is not None:
            direction = doa_term(doa.theta, phi)
        overall = c_sm + weights.alpha * c_avc + weights.beta * direction
        scores[identity] = IdentityScores(c_sm, c_avc, direction, visible, overall)
    return FusionFrame(start, end, scores)


def _absorb_short_islands(t: Timeline, min_duration_ms: int) -> Timeline:
    """Fold sub-minimum segments into a longer same-label neighbor, else drop them."""
    segments = sorted(t.segments, key=lambda s: (s.onset_ms, s.speaker))
    keep: list[Segment] = []
    for k, seg in enumerate(segments):
        if seg.duration_ms >= min_duration_ms:
            keep.append(seg)
            continue
        prev = keep[-1] if keep else None
        nxt = segments[k + 1] if k + 1 < len(segments) else None
        prev_ok = (
            prev is not None
            and prev.speaker == seg.speaker
            and prev.duration_ms >= min_duration_ms
        )
        nxt_ok = (
            nxt is not None
            and nxt.speaker == seg.speaker
            and nxt.duration_ms >= min_duration_ms
        )
        if prev_ok and (not nxt_ok or prev.duration_ms >= nxt.duration_ms):
            keep[-1] = Segment(prev.onset_ms, seg.offset_ms - prev.onset_ms, seg.speaker)
        elif nxt_ok:
            segments[k + 1] = Segment(seg.onset_ms, nxt.offset_ms - seg.onset_ms, seg.speaker)
        # otherwise dropped
    return Timeline(tuple(keep), t.source_id)


def decide(
    frames: list[FusionFrame],
    speech: Timeline,
    min_score: float,
    min_duration: float = 0.3,
    merge_tolerance: float = 0.75,
) -> Timeline:
    """Turn per-window fusion frames into a single-speaker-per-instant hypothesis.

    Each window takes its argmax identity when the score clears
    ``min_score`` and ``unknown`` otherwise; overlapping windows hand their
    shared half to the later window, same-label gaps up to
    ``merge_tolerance`` are merged, and islands shorter than
    ``min_duration`` are absorbed into a longer same-label neighbor or
    dropped.
    """
    labeled: list[tuple[float, float, str]] = []
    for frame in sorted(frames, key=lambda f: f.start):
        if not frame.scores:
            continue
        identity, entry = min(frame.scores.items(), key=lambda kv: (-kv[1].c_overall, kv[0]))
        label = identity if entry.c_overall >= min_score else UNKNOWN_LABEL
        labeled.append((frame.start, frame.end, label))
    if not labeled:
        return Timeline((), speech.source_id)
    labeled = extend_tail_windows(labeled, speech)
    hypothesis = merge_label_runs(
        timeline_from_labeled_windows(labeled, speech.source_id), merge_tolerance
    )
    return _absorb_short_islands(hypothesis, int(round(min_duration * 1000)))
