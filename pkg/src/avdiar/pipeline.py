"""End-to-end diarisation runs tying the modules together for one recording."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .audio import SUPPORTED_RATES, VadConfig, energy_vad, read_wav
from .avc import load_avc, load_face_tracks, smooth_median, confident_segments
from .config import PipelineConfig, resolve_geometry
from .fusion import FusionFrame, FusionWeights, decide, fuse
from .localization import azimuth_histogram, bformat_theta_stream, tdoa_theta_stream
from .speaker import (
    EnrollmentError,
    FileEmbeddingProvider,
    StubEmbeddingProvider,
    baseline_diarize,
    enroll,
    score_sm,
    window_speech,
)
from .timeline import Timeline, emit_rttm, parse_rttm, speech_support

__all__ = ["MODES", "PipelineError", "DiarizeResult", "run_diarize"]

MODES = ("baseline", "sm", "sm+avc", "sm+avc+ssl")


class PipelineError(ValueError):
    """Input or configuration problem, annotated with the offending file."""


@dataclass(frozen=True)
class DiarizeResult:
    hypothesis: Timeline
    rttm: str
    score_dump: str
    enrollment_failures: tuple[str, ...]


def _read_text(path: str | Path, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise PipelineError(f"{what} file not found: {p}")
    return p.read_text()


def _parse(path, text_parser, raw, what):
    try:
        return text_parser(raw)
    except ValueError as exc:
        raise PipelineError(f"{path}: {exc}") from exc


def _effective_weights(mode: str, config: PipelineConfig) -> FusionWeights:
    if mode == "sm":
        return FusionWeights(0.0, 0.0)
    if mode == "sm+avc":
        return FusionWeights(config.alpha, 0.0)
    return FusionWeights(config.alpha, config.beta)


def run_diarize(
    audio_path: str | Path,
    config: PipelineConfig,
    mode: str,
    faces_path: str | Path | None = None,
    avc_path: str | Path | None = None,
    emb_path: str | Path | None = None,
    ref_path: str | Path | None = None,
    vad: str = "energy",
    source_id: str | None = None,
) -> DiarizeResult:
    """Produce a diarisation hypothesis for one recording.

    ``mode`` selects the active score terms: ``baseline`` clusters windows
    with AHC and ignores all visual inputs, ``sm`` scores enrolled models
    only, ``sm+avc`` adds the alpha term, ``sm+avc+ssl`` adds the beta
    term. ``vad`` is ``energy`` or ``reference`` (the latter reads the
    speech regions from ``ref_path``). All inputs are validated before any
    output is produced.
    """
    if mode not in MODES:
        raise PipelineError(f"unknown mode {mode!r}; expected one of {MODES}")
    if vad not in ("energy", "reference"):
        raise PipelineError(f"unknown vad {vad!r}; expected 'energy' or 'reference'")

    audio_raw = Path(audio_path)
    if not audio_raw.is_file():
        raise PipelineError(f"audio file not found: {audio_raw}")
    audio = _parse(audio_path, read_wav, audio_raw.read_bytes(), "audio")
    if audio.sample_rate not in SUPPORTED_RATES:
        raise PipelineError(
            f"{audio_path}: sample rate {audio.sample_rate} unsupported "
            f"(expected one of {SUPPORTED_RATES}; resampling is out of scope)"
        )

    if vad == "reference":
        if ref_path is None:
            raise PipelineError("vad=reference requires a reference RTTM path")
        reference = _parse(ref_path, parse_rttm, _read_text(ref_path, "reference RTTM"), "rttm")
        sid = source_id or reference.source_id
        speech = Timeline(speech_support(reference).segments, sid)
    else:
        sid = source_id or audio_raw.stem
        vad_config = VadConfig(
            frame_s=config.vad_frame_s,
            threshold_db=config.vad_threshold_db,
            hangover_frames=config.vad_hangover,
            floor_cap_db=config.vad_floor_cap_db,
            merge_gap_s=config.vad_merge_gap_s,
        )
        speech = energy_vad(audio.channel(0), audio.sample_rate, vad_config, sid)

    if emb_path is not None:
        provider = _parse(emb_path, FileEmbeddingProvider, _read_text(emb_path, "embedding"), "emb")
    elif config.embedding == "file":
        raise PipelineError("config embedding=file requires an embedding file path")
    else:
        provider = StubEmbeddingProvider(audio.channel(0), audio.sample_rate)

    if mode == "baseline":
        hypothesis = baseline_diarize(speech, provider, config.ahc_threshold)
        dump_lines = ["window_start,window_end,label"]
        for seg in hypothesis:
            dump_lines.append(f"{seg.onset:.3f},{seg.offset:.3f},{seg.speaker}")
        return DiarizeResult(hypothesis, emit_rttm(hypothesis), "\n".join(dump_lines) + "\n", ())

    if avc_path is None:
        raise PipelineError(f"mode {mode} requires an AVC score file")
    if faces_path is None:
        raise PipelineError(f"mode {mode} requires a face-track file")
    avc_streams = _parse(
        avc_path, lambda t: load_avc(t, config.avc_offset_frames), _read_text(avc_path, "AVC"), "avc"
    )
    faces = _parse(faces_path, load_face_tracks, _read_text(faces_path, "face-track"), "faces")
    face_map = {f.identity: f for f in faces}

    smoothed = {s.identity: smooth_median(s, config.median_width) for s in avc_streams}
    identities = sorted(smoothed)

    models = []
    failures = []
    for identity in identities:
        candidates = confident_segments(smoothed[identity], tau=config.avc_tau)
        try:
            models.append(
                enroll(identity, candidates, provider, config.enroll_threshold, config.n_enroll)
            )
        except EnrollmentError:
            failures.append(identity)

    windows = window_speech(speech)
    doa_series: list = [None] * len(windows)
    if mode == "sm+avc+ssl" and windows:
        geometry = resolve_geometry(config)
        if geometry is None:
            times, thetas = bformat_theta_stream(audio, config.ssl_frame_s, config.ssl_hop_s)
        else:
            if audio.n_channels != geometry.n_mics:
                raise PipelineError(
                    f"{audio_path}: array {config.array!r} needs {geometry.n_mics} channels, "
                    f"audio has {audio.n_channels}"
                )
            times, thetas = tdoa_theta_stream(audio, geometry, config.ssl_frame_s, config.ssl_hop_s)
        prev_theta = None
        for k, (start, end) in enumerate(windows):
            hist = azimuth_histogram(
                times, thetas, 0.5 * (start + end), config.ssl_bin_width,
                orientation_offset=config.ssl_orientation_offset,
            )
            estimate = hist.estimate(prev_theta)
            doa_series[k] = estimate
            if estimate is not None:
                prev_theta = estimate.theta

    weights = _effective_weights(mode, config)
    frames: list[FusionFrame] = []
    for (start, end), doa in zip(windows, doa_series):
        vector = provider.embed(start, end)
        sm_scores = score_sm(vector, models)
        c_sm_map = {identity: sm_scores.get(identity, 0.0) for identity in identities}
        frames.append(
            fuse((start, end), c_sm_map, smoothed, doa, face_map, weights, config.avc_tau)
        )

    hypothesis = decide(frames, speech, config.min_score, config.min_duration_s)
    dump_lines = ["window_start,window_end,identity,c_sm,c_avc,doa,visible,c_overall"]
    for frame in frames:
        for identity in identities:
            entry = frame.scores[identity]
            dump_lines.append(
                f"{frame.start:.3f},{frame.end:.3f},{identity},"
                f"{entry.c_sm:.6f},{entry.c_avc:.6f},{entry.doa:.6f},"
                f"{int(entry.visible)},{entry.c_overall:.6f}"
            )
    return DiarizeResult(
        hypothesis, emit_rttm(hypothesis), "\n".join(dump_lines) + "\n", tuple(failures)
    )
