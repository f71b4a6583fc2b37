"""Sliding-window embeddings, AV-driven enrollment, scoring, and AHC clustering."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .audio import MfccConfig, mfcc
from .timeline import (
    Timeline,
    extend_tail_windows,
    merge_label_runs,
    timeline_from_labeled_windows,
)

__all__ = [
    "EmbeddingWindow",
    "SpeakerModel",
    "EmbeddingProvider",
    "FileEmbeddingProvider",
    "StubEmbeddingProvider",
    "EnrollmentError",
    "EmbeddingLookupError",
    "window_speech",
    "enroll",
    "score_sm",
    "ahc_cluster",
    "baseline_diarize",
]

WINDOW_S = 1.5
HOP_S = 0.75
MIN_WINDOW_S = 0.5

EMB_HEADER_PREFIX = "AVDIAR-EMB v1 dim="


class EnrollmentError(ValueError):
    """No candidate segment cleared the enrollment confidence threshold."""


class EmbeddingLookupError(LookupError):
    """Requested window is not covered by the embedding source."""


@dataclass(frozen=True)
class EmbeddingWindow:
    start: float
    end: float
    vector: np.ndarray

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"window end must exceed start: [{self.start}, {self.end})")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("embedding vector must be finite")


@dataclass(frozen=True)
class SpeakerModel:
    """Per-identity centroid plus the enrollment segments that produced it."""

    identity: str
    centroid: np.ndarray
    enrolled_segments: tuple[tuple[float, float, float], ...]  # (start, end, confidence)


class EmbeddingProvider(ABC):
    """Deterministic window-to-vector lookup with a fixed dimension."""

    dimension: int

    @abstractmethod
    def embed(self, start: float, end: float) -> np.ndarray: ...


class FileEmbeddingProvider(EmbeddingProvider):
    """Embeddings read from an ``AVDIAR-EMB v1`` text file.

    Lookups resolve to the record whose start lies nearest the query start,
    within 10 ms; anything farther is an error rather than a silent miss.
    """

    ALIGN_TOL_S = 0.010

    def __init__(self, text: str):
        lines = text.splitlines()
        if not lines or not lines[0].startswith(EMB_HEADER_PREFIX):
            raise ValueError(f"missing header line {EMB_HEADER_PREFIX!r}<D>")
        self.dimension = int(lines[0][len(EMB_HEADER_PREFIX):])
        starts, ends, vectors = [], [], []
        for line_no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2 + self.dimension:
                raise ValueError(
                    f"embedding line {line_no}: expected {2 + self.dimension} fields, got {len(parts)}"
                )
            starts.append(float(parts[0]))
            ends.append(float(parts[1]))
            vectors.append(np.array([float(v) for v in parts[2:]]))
        order = np.argsort(starts)
        self._starts = np.array(starts)[order]
        self._ends = np.array(ends)[order]
        self._vectors = [vectors[i] for i in order]

    def embed(self, start: float, end: float) -> np.ndarray:
        if self._starts.size == 0:
            raise EmbeddingLookupError(f"no embedding records for window [{start:.3f}, {end:.3f})")
        idx = int(np.argmin(np.abs(self._starts - start)))
        if abs(self._starts[idx] - start) > self.ALIGN_TOL_S + 1e-9:
            raise EmbeddingLookupError(
                f"no embedding within 10 ms of window start {start:.3f} "
                f"(nearest record starts at {self._starts[idx]:.3f})"
            )
        return self._vectors[idx]


def format_embedding_file(dimension: int, records) -> str:
    """Serialize (start, end, vector) records to the embedding file format."""
    lines = [f"{EMB_HEADER_PREFIX}{dimension}"]
    for start, end, vector in records:
        if len(vector) != dimension:
            raise ValueError(f"record at {start:.3f}: dimension {len(vector)} != {dimension}")
        values = " ".join(f"{v:.6f}" for v in vector)
        lines.append(f"{start:.3f} {end:.3f} {values}")
    return "\n".join(lines) + "\n"


class StubEmbeddingProvider(EmbeddingProvider):
    """MFCC-statistics stand-in for a neural extractor.

    The vector is the per-coefficient mean and standard deviation of the
    window's MFCC matrix, L2-normalized (D = 2 * n_coeffs).
    """

    def __init__(self, channel: np.ndarray, sample_rate: int, config: MfccConfig = MfccConfig()):
        self._channel = np.asarray(channel, dtype=np.float64)
        self._rate = sample_rate
        self._config = config
        self.dimension = 2 * config.n_coeffs

    def embed(self, start: float, end: float) -> np.ndarray:
        lo = int(round(start * self._rate))
        hi = int(round(end * self._rate))
        if start < 0 or hi > self._channel.size:
            raise EmbeddingLookupError(
                f"window [{start:.3f}, {end:.3f}) is outside the audio extent"
            )
        matrix = mfcc(self._channel[lo:hi], self._rate, self._config).frames
        if matrix.shape[0] == 0:
            raise EmbeddingLookupError(f"window [{start:.3f}, {end:.3f}) too short for one frame")
        vector = np.concatenate([matrix.mean(axis=0), matrix.std(axis=0)])
        norm = np.linalg.norm(vector)
        return vector / norm if norm > 0 else vector


def window_speech(speech: Timeline) -> list[tuple[float, float]]:
    """Slice speech segments into 1.5 s windows every 0.75 s.

    The remainder past the last full window is emitted as a short trailing
    window when it is at least 0.5 s long; segments shorter than 0.5 s
    yield a single window covering the segment.
    """
    windows: list[tuple[float, float]] = []
    for seg in speech:
        start, end = seg.onset, seg.offset
        if end - start < MIN_WINDOW_S:
            windows.append((start, end))
            continue
        cover = start
        k = 0
        while start + k * HOP_S + WINDOW_S <= end + 1e-9:
            windows.append((start + k * HOP_S, start + k * HOP_S + WINDOW_S))
            cover = start + k * HOP_S + WINDOW_S
            k += 1
        if end - cover >= MIN_WINDOW_S - 1e-9:
            windows.append((cover, end))
    return windows


def enroll(
    identity: str,
    candidates: list[tuple[float, float, float]],
    provider: EmbeddingProvider,
    threshold: float,
    n_enroll: int = 10,
) -> SpeakerModel:
    """Build a speaker model from the most confident candidate windows.

    Takes the ``min(n_enroll, #above-threshold)`` highest-confidence
    candidates; raises EnrollmentError when none clears the threshold.
    """
    above = [c for c in candidates if c[2] > threshold]
    if not above:
        raise EnrollmentError(
            f"identity {identity!r}: no candidate above threshold {threshold}"
        )
    above.sort(key=lambda c: (-c[2], c[0]))
    chosen = above[:n_enroll]
    vectors = np.stack([provider.embed(start, end) for start, end, _ in chosen])
    centroid = vectors.mean(axis=0)
    norm = np.linalg.norm(centroid)
    if norm == 0:
        raise EnrollmentError(f"identity {identity!r}: degenerate zero centroid")
    return SpeakerModel(identity, centroid / norm, tuple(chosen))


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def score_sm(window_vector: np.ndarray, models: list[SpeakerModel]) -> dict[str, float]:
    """Cosine similarity of a window embedding against every enrolled model."""
    scores = {}
    for model in models:
        if model.centroid.shape != window_vector.shape:
            raise ValueError(
                f"dimension mismatch: window {window_vector.shape} vs "
                f"model {model.identity!r} {model.centroid.shape}"
            )
        scores[model.identity] = _cosine(window_vector, model.centroid)
    return scores


def ahc_cluster(windows: list[EmbeddingWindow], stop_threshold: float) -> list[int]:
    """Average-linkage agglomerative clustering on cosine similarity.

    Repeatedly merges the cluster pair with the highest average pairwise
    similarity until the best score falls below ``stop_threshold``. Ties
    are broken toward the lexicographically lowest index pair. Returned
    labels are dense integers ordered by first appearance.
    """
    if not windows:
        raise ValueError("ahc_cluster requires at least one window")
    vectors = np.stack([w.vector for w in windows]).astype(np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    unit = vectors / norms
    n = len(windows)
    # link[a, b] = average pairwise similarity between clusters a and b;
    # row-major argmax makes exact ties resolve to the lowest (a, b) pair
    link = unit @ unit.T
    link[np.tril_indices(n)] = -np.inf
    sizes = np.ones(n)
    parent = np.arange(n)
    alive = np.ones(n, dtype=bool)
    while alive.sum() > 1:
        flat = int(np.argmax(link))
        a, b = divmod(flat, n)
        if link[a, b] < stop_threshold:
            break
        # Lance-Williams average-linkage update of cluster a; retire b
        for c in np.flatnonzero(alive):
            if c in (a, b):
                continue
            lo_a, hi_a = min(a, c), max(a, c)
            lo_b, hi_b = min(b, c), max(b, c)
            merged = (sizes[a] * link[lo_a, hi_a] + sizes[b] * link[lo_b, hi_b]) / (
                sizes[a] + sizes[b]
            )
            link[lo_a, hi_a] = merged
        sizes[a] += sizes[b]
        alive[b] = False
        parent[parent == b] = a
        link[b, :] = -np.inf
        link[:, b] = -np.inf
    labels = [0] * n
    seen: dict[int, int] = {}
    for i in range(n):
        root = int(parent[i])
        if root not in seen:
            seen[root] = len(seen)
        labels[i] = seen[root]
    return labels


def baseline_diarize(
    speech: Timeline,
    provider: EmbeddingProvider,
    stop_threshold: float,
    merge_tolerance: float = 0.75,
) -> Timeline:
    """Unsupervised hypothesis: windows -> embeddings -> AHC -> ``clusterK`` labels."""
    windows = window_speech(speech)
    if not windows:
        return Timeline((), speech.source_id)
    embedded = [
        EmbeddingWindow(start, end, provider.embed(start, end)) for start, end in windows
    ]
    labels = ahc_cluster(embedded, stop_threshold)
    labeled = extend_tail_windows(
        [(start, end, f"cluster{label}") for (start, end), label in zip(windows, labels)],
        speech,
    )
    return merge_label_runs(
        timeline_from_labeled_windows(labeled, speech.source_id), merge_tolerance
    )
