"""Diarisation error rate with collar exclusion, optimal mapping, and reporting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .timeline import Timeline, to_ms

__all__ = [
    "DerReport",
    "score_der",
    "optimal_mapping",
    "format_report",
    "UNKNOWN_LABEL",
]

# Hypothesis label that is never mapped to a reference speaker; it scores as
# error wherever it overlaps reference speech.
UNKNOWN_LABEL = "unknown"


@dataclass(frozen=True)
class DerReport:
    """MS / FA / SPKE / DER as percentages of scored reference speech time."""

    missed: float
    false_alarm: float
    speaker_error: float
    der: float
    mapping: dict[str, str]  # hypothesis label -> reference label
    scored_time: float  # scored reference speech, seconds (overlap counted per speaker)


def _merged_intervals(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for on, off in sorted(intervals):
        if merged and on <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], off))
        else:
            merged.append((on, off))
    return merged


def _atoms(reference: Timeline, hypothesis: Timeline, excluded: list[tuple[int, int]]):
    """Elementary scored intervals with their active reference set and hypothesis label."""
    points = {0}
    for seg in list(reference) + list(hypothesis):
        points.add(seg.onset_ms)
        points.add(seg.offset_ms)
    for on, off in excluded:
        points.add(on)
        points.add(off)
    grid = sorted(points)
    out = []
    for t0, t1 in zip(grid, grid[1:]):
        if any(on <= t0 and t1 <= off for on, off in excluded):
            continue
        refs = frozenset(
            s.speaker for s in reference if s.onset_ms <= t0 and s.offset_ms >= t1
        )
        hyps = [s.speaker for s in hypothesis if s.onset_ms <= t0 and s.offset_ms >= t1]
        if len(hyps) > 1:
            raise ValueError(
                f"hypothesis has {len(hyps)} concurrent speakers at {t0 / 1000.0:.3f}s; "
                "expected at most one"
            )
        out.append((t1 - t0, refs, hyps[0] if hyps else None))
    return out


def _assign(overlap: dict[tuple[str, str], int]) -> dict[str, str]:
    refs = sorted({r for r, _ in overlap})
    hyps = sorted({h for _, h in overlap})
    if not refs or not hyps:
        return {}
    matrix = np.zeros((len(refs), len(hyps)))
    for (r, h), t in overlap.items():
        matrix[refs.index(r), hyps.index(h)] = t
    rows, cols = scipy.optimize.linear_sum_assignment(matrix, maximize=True)
    return {hyps[c]: refs[r] for r, c in zip(rows, cols) if matrix[r, c] > 0}


def optimal_mapping(reference: Timeline, hypothesis: Timeline) -> dict[str, str]:
    """One-to-one hypothesis-to-reference map maximizing co-occurring speech time.

    The ``unknown`` hypothesis label is never mapped. Hypothesis labels
    beyond the reference speaker count stay unmapped and score as error
    wherever they overlap reference speech.
    """
    overlap: dict[tuple[str, str], int] = {}
    for length, refs, hyp in _atoms(reference, hypothesis, []):
        if hyp is None or hyp == UNKNOWN_LABEL:
            continue
        for r in refs:
            key = (r, hyp)
            overlap[key] = overlap.get(key, 0) + length
    return _assign(overlap)


def score_der(reference: Timeline, hypothesis: Timeline, collar: float = 0.25) -> DerReport:
    """Score a single-speaker-per-instant hypothesis against a reference.

    A ``±collar`` region around every reference segment boundary is
    excluded from scoring. Within scored regions, missed speech is
    reference time with no hypothesis (overlapped reference speakers beyond
    the one hypothesis slot also count as missed), false alarm is
    hypothesis time with no reference, and speaker error is time where the
    mapped labels disagree. All components are percentages of scored
    reference speech time.
    """
    if reference.source_id != hypothesis.source_id:
        raise ValueError(
            f"mismatched source_id: {reference.source_id!r} vs {hypothesis.source_id!r}"
        )
    if collar < 0:
        raise ValueError(f"collar must be >= 0, got {collar}")
    collar_ms = to_ms(collar)
    excluded = _merged_intervals(
        [
            (max(edge - collar_ms, 0), edge + collar_ms)
            for seg in reference
            for edge in (seg.onset_ms, seg.offset_ms)
        ]
        if collar_ms > 0
        else []
    )
    atoms = _atoms(reference, hypothesis, excluded)

    overlap: dict[tuple[str, str], int] = {}
    for length, refs, hyp in atoms:
        if hyp is None or hyp == UNKNOWN_LABEL:
            continue
        for r in refs:
            key = (r, hyp)
            overlap[key] = overlap.get(key, 0) + length
    mapping = _assign(overlap)

    miss_ms = fa_ms = spke_ms = denom_ms = 0
    for length, refs, hyp in atoms:
        n_ref = len(refs)
        denom_ms += n_ref * length
        if n_ref == 0:
            if hyp is not None:
                fa_ms += length
        elif hyp is None:
            miss_ms += n_ref * length
        else:
            miss_ms += (n_ref - 1) * length
            if mapping.get(hyp) not in refs:
                spke_ms += length
    if denom_ms == 0:
        if fa_ms == 0:
            return DerReport(0.0, 0.0, 0.0, 0.0, mapping, 0.0)
        raise ValueError("no scored reference speech to normalize against")
    missed = 100.0 * miss_ms / denom_ms
    false_alarm = 100.0 * fa_ms / denom_ms
    speaker_error = 100.0 * spke_ms / denom_ms
    return DerReport(
        missed=missed,
        false_alarm=false_alarm,
        speaker_error=speaker_error,
        der=missed + false_alarm + speaker_error,
        mapping=mapping,
        scored_time=denom_ms / 1000.0,
    )


def format_report(per_file: list[tuple[str, DerReport]]) -> str:
    """Fixed-format report: one line per file plus a time-weighted TOTAL line."""
    lines = [
        f"{file_id} MS={r.missed:.1f} FA={r.false_alarm:.1f} "
        f"SPKE={r.speaker_error:.1f} DER={r.der:.1f}"
        for file_id, r in per_file
    ]
    total_time = sum(r.scored_time for _, r in per_file)
    if total_time > 0:
        weighted = [
            sum(getattr(r, field) * r.scored_time for _, r in per_file) / total_time
            for field in ("missed", "false_alarm", "speaker_error", "der")
        ]
    else:
        weighted = [0.0, 0.0, 0.0, 0.0]
    lines.append(
        f"TOTAL MS={weighted[0]:.1f} FA={weighted[1]:.1f} "
        f"SPKE={weighted[2]:.1f} DER={weighted[3]:.1f}"
    )
    return "".join(line + "\n" for line in lines)
