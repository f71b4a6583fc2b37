"""Synthetic meeting generator.

Produces mutually consistent multi-channel audio, a reference RTTM, face
tracks, AVC score streams, and an embedding file from one seeded scenario,
so every end-to-end test has exact ground truth. Speech is shaped noise:
the pipeline consumes energies, delays, and embeddings, none of which need
phonetic realism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import MultichannelAudio, write_wav
from .avc import AvcStream, FaceTrack, visible_runs
from .localization import ArrayGeometry
from .speaker import HOP_S, WINDOW_S, format_embedding_file, window_speech
from .timeline import Segment, Timeline, emit_rttm, speech_support

__all__ = [
    "Scenario",
    "SimulationBundle",
    "load_scenario",
    "simulate",
    "BUNDLE_FILES",
]

BUNDLE_FILES = {
    "wav": "meeting.wav",
    "rttm": "ref.rttm",
    "faces": "faces.csv",
    "avc": "avc.csv",
    "emb": "emb.txt",
}

_SOURCE_RMS = 0.08


@dataclass(frozen=True)
class Scenario:
    n_speakers: int = 4
    duration: float = 180.0
    seating_azimuths: tuple[float, ...] = ()  # empty = evenly spaced
    turn_range: tuple[float, float] = (2.0, 5.0)
    gap_range: tuple[float, float] = (0.5, 1.5)
    occlusion_rate: float = 0.2
    # sync-network false positives: bursts of speech-like AV distance while the
    # identity is visible but silent, per minute of non-speaking time
    false_sync_bursts_per_min: float = 0.8
    snr_db: float = 20.0
    seed: int = 53
    sample_rate: int = 16000
    fps: float = 25.0
    embedding_dim: int = 32
    embedding_sigma: float = 0.8

    def __post_init__(self):
        if self.n_speakers < 1:
            raise ValueError("n_speakers must be >= 1")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if not (0.0 <= self.occlusion_rate < 1.0):
            raise ValueError("occlusion_rate must be in [0, 1)")
        if self.false_sync_bursts_per_min < 0:
            raise ValueError("false_sync_bursts_per_min must be >= 0")
        if not (0 < self.turn_range[0] <= self.turn_range[1]):
            raise ValueError("turn_range must satisfy 0 < min <= max")
        if not (0 <= self.gap_range[0] <= self.gap_range[1]):
            raise ValueError("gap_range must satisfy 0 <= min <= max")
        azimuths = self.azimuths()
        for i in range(len(azimuths)):
            for j in range(i + 1, len(azimuths)):
                gap = abs(azimuths[i] - azimuths[j]) % 360.0
                if min(gap, 360.0 - gap) < 20.0:
                    raise ValueError("seating azimuths must be >= 20 degrees apart")

    def azimuths(self) -> tuple[float, ...]:
        if self.seating_azimuths:
            if len(self.seating_azimuths) != self.n_speakers:
                raise ValueError("seating_azimuths must list one angle per speaker")
            return tuple(float(a) % 360.0 for a in self.seating_azimuths)
        return tuple(360.0 * k / self.n_speakers for k in range(self.n_speakers))

    def speaker_labels(self) -> list[str]:
        return [f"spk{k}" for k in range(self.n_speakers)]


_SCENARIO_KEYS = {
    "n_speakers": int,
    "duration": float,
    "turn_min": float,
    "turn_max": float,
    "gap_min": float,
    "gap_max": float,
    "occlusion_rate": float,
    "false_sync_bursts_per_min": float,
    "snr_db": float,
    "seed": int,
    "sample_rate": int,
    "fps": float,
    "embedding_dim": int,
    "embedding_sigma": float,
}


def load_scenario(text: str) -> Scenario:
    """Parse a flat ``key = value`` scenario file (# starts a comment)."""
    values: dict[str, object] = {}
    azimuths: tuple[float, ...] = ()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"scenario line {line_no}: expected 'key = value'")
        key, _, value = (part.strip() for part in line.partition("="))
        if key == "seating_azimuths":
            azimuths = tuple(float(v) for v in value.split(",") if v.strip())
        elif key in _SCENARIO_KEYS:
            values[key] = _SCENARIO_KEYS[key](value)
        else:
            raise ValueError(f"scenario line {line_no}: unknown key {key!r}")
    kwargs = dict(values)
    turn = (kwargs.pop("turn_min", 2.0), kwargs.pop("turn_max", 5.0))
    gap = (kwargs.pop("gap_min", 0.5), kwargs.pop("gap_max", 1.5))
    return Scenario(seating_azimuths=azimuths, turn_range=turn, gap_range=gap, **kwargs)


@dataclass(frozen=True)
class SimulationBundle:
    scenario: Scenario
    audio: MultichannelAudio
    reference: Timeline
    faces: list[FaceTrack]
    avc: list[AvcStream]
    embedding_records: list[tuple[float, float, np.ndarray]]
    embedding_dim: int
    centroids: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def write(self, outdir: str | Path) -> dict[str, Path]:
        """Write the fixed-name bundle files; returns the paths written."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / name for k, name in BUNDLE_FILES.items()}
        paths["wav"].write_bytes(write_wav(self.audio, "float32"))
        paths["rttm"].write_text(emit_rttm(self.reference))
        paths["avc"].write_text(_avc_csv(self.avc, with_azimuth=False))
        paths["faces"].write_text(_avc_csv(self.faces, with_azimuth=True))
        paths["emb"].write_text(format_embedding_file(self.embedding_dim, self.embedding_records))
        return paths


def _avc_csv(streams, with_azimuth: bool) -> str:
    header = "time,identity,distance,visible" + (",azimuth_deg" if with_azimuth else "")
    rows = [header]
    order = sorted(range(len(streams)), key=lambda i: streams[i].identity)
    n_samples = len(streams[0].times) if streams else 0
    for k in range(n_samples):
        for i in order:
            s = streams[i]
            row = f"{s.times[k]:.3f},{s.identity},{s.distances[k]:.6f},{int(s.visible[k])}"
            if with_azimuth:
                row += f",{s.azimuths[k]:.3f}"
            rows.append(row)
    return "\n".join(rows) + "\n"


def _draw_turns(scenario: Scenario, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """(speaker index, onset_ms, duration_ms) turns with silence gaps between them."""
    turns = []
    lead_in = max(scenario.gap_range[0], 0.25)
    t = lead_in + rng.uniform(0.0, scenario.gap_range[1] - scenario.gap_range[0] + 1e-12)
    prev = -1
    while True:
        length = rng.uniform(*scenario.turn_range)
        if t + length > scenario.duration - 0.05:
            break
        if scenario.n_speakers == 1:
            spk = 0
        else:
            spk = int(rng.integers(scenario.n_speakers - 1))
            if spk >= prev:
                spk += 1  # uniform over speakers other than the previous one
        onset_ms = int(round(t * 1000.0))
        dur_ms = int(round(length * 1000.0))
        turns.append((spk, onset_ms, dur_ms))
        prev = spk
        t = (onset_ms + dur_ms) / 1000.0 + rng.uniform(*scenario.gap_range)
    if not turns:
        raise ValueError("infeasible scenario: no turn fits inside the requested duration")
    return turns


def _speaker_envelopes(scenario: Scenario, rng: np.random.Generator) -> list[dict]:
    """Formant-like spectral envelope parameters, one set per speaker."""
    envelopes = []
    for _ in range(scenario.n_speakers):
        centers = rng.uniform(250.0, 3400.0, size=3)
        widths = rng.uniform(80.0, 350.0, size=3)
        gains = rng.uniform(1.0, 4.0, size=3)
        tilt = rng.uniform(0.5, 2.0)
        envelopes.append({"centers": centers, "widths": widths, "gains": gains, "tilt": tilt})
    return envelopes


def _shaped_noise(n: int, env: dict, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal(n)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    shape = np.full(freqs.size, 0.05)
    for c, w, g in zip(env["centers"], env["widths"], env["gains"]):
        shape += g * np.exp(-0.5 * ((freqs - c) / w) ** 2)
    shape *= 1.0 / (1.0 + (freqs / 1000.0) ** env["tilt"])
    shaped = np.fft.irfft(np.fft.rfft(white) * shape, n=n)
    rms = np.sqrt(np.mean(shaped**2))
    shaped *= _SOURCE_RMS / max(rms, 1e-12)
    ramp = min(int(0.010 * sample_rate), n // 2)
    if ramp > 0:
        fade = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, ramp)))
        shaped[:ramp] *= fade
        shaped[-ramp:] *= fade[::-1]
    return shaped


def _delay_fractional(signal: np.ndarray, delay_s: float, sample_rate: int) -> np.ndarray:
    """Shift a padded signal by a (possibly negative, fractional) delay."""
    n = signal.size
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    return np.fft.irfft(np.fft.rfft(signal) * np.exp(-2j * np.pi * freqs * delay_s), n=n)


def simulate(scenario: Scenario, geometry: ArrayGeometry | None) -> SimulationBundle:
    """Render one meeting; ``geometry=None`` emits B-format (W,X,Y,Z) audio.

    The seeded generator fully determines every output file.
    """
    rng = np.random.default_rng(scenario.seed)
    fs = scenario.sample_rate
    labels = scenario.speaker_labels()
    azimuths = scenario.azimuths()
    turns = _draw_turns(scenario, rng)
    envelopes = _speaker_envelopes(scenario, rng)

    n_samples = int(round(scenario.duration * fs))
    n_channels = 4 if geometry is None else geometry.n_mics
    channels = np.zeros((n_channels, n_samples))
    if geometry is not None:
        positions = np.asarray(geometry.mic_positions)
        margin = int(math.ceil(geometry.max_pair_delay() * fs)) + 8
    else:
        margin = 0

    for spk, onset_ms, dur_ms in turns:
        start = int(round(onset_ms * fs / 1000.0))
        length = int(round(dur_ms * fs / 1000.0))
        source = _shaped_noise(length, envelopes[spk], fs, rng)
        theta = math.radians(azimuths[spk])
        unit = np.array([math.cos(theta), math.sin(theta)])
        if geometry is None:
            channels[0, start : start + length] += source
            channels[1, start : start + length] += source * math.cos(theta)
            channels[2, start : start + length] += source * math.sin(theta)
        else:
            padded = np.zeros(length + 2 * margin)
            padded[margin : margin + length] = source
            lo = start - margin
            for m in range(n_channels):
                delay = -float(positions[m] @ unit) / geometry.speed_of_sound
                shifted = _delay_fractional(padded, delay, fs)
                a = max(lo, 0)
                b = min(lo + shifted.size, n_samples)
                channels[m, a:b] += shifted[a - lo : b - lo]

    noise_rms = _SOURCE_RMS * 10.0 ** (-scenario.snr_db / 20.0)
    for m in range(n_channels):
        channels[m] += noise_rms * rng.standard_normal(n_samples)
    audio = MultichannelAudio(fs, channels)

    source_id = f"sim{scenario.seed}"
    reference = Timeline(
        tuple(Segment(on, dur, labels[spk]) for spk, on, dur in turns), source_id
    )

    faces, avc_streams = _render_tracks(scenario, turns, azimuths, rng)
    records, centroids = _render_embeddings(scenario, reference, faces, rng)
    return SimulationBundle(
        scenario=scenario,
        audio=audio,
        reference=reference,
        faces=faces,
        avc=avc_streams,
        embedding_records=records,
        embedding_dim=scenario.embedding_dim,
        centroids=centroids,
    )


def _bool_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    runs = []
    i = 0
    while i < mask.size:
        if mask[i]:
            j = i
            while j + 1 < mask.size and mask[j + 1]:
                j += 1
            runs.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    return runs


def _render_tracks(scenario, turns, azimuths, rng):
    labels = scenario.speaker_labels()
    n_frames = int(math.floor(scenario.duration * scenario.fps))
    times = np.arange(n_frames) / scenario.fps
    faces: list[FaceTrack] = []
    avc_streams: list[AvcStream] = []
    for k, label in enumerate(labels):
        speaking = np.zeros(n_frames, dtype=bool)
        visible = np.ones(n_frames, dtype=bool)
        for spk, onset_ms, dur_ms in turns:
            if spk != k:
                continue
            on, off = onset_ms / 1000.0, (onset_ms + dur_ms) / 1000.0
            speaking |= (times >= on) & (times < off)
            if scenario.occlusion_rate > 0.0:
                occ_len = scenario.occlusion_rate * (off - on)
                occ_on = on + rng.uniform(0.0, (off - on) - occ_len)
                visible &= ~((times >= occ_on) & (times < occ_on + occ_len))
        speechlike = speaking.copy()
        if scenario.false_sync_bursts_per_min > 0.0:
            for lo, hi in _bool_runs(~speaking):
                span = (hi - lo) / scenario.fps
                if span < 2.5:
                    continue
                for _ in range(rng.poisson(scenario.false_sync_bursts_per_min * span / 60.0)):
                    burst = rng.uniform(1.0, 2.0)
                    on = lo / scenario.fps + rng.uniform(0.0, span - burst)
                    speechlike |= (times >= on) & (times < on + burst)
        near = rng.normal(0.3, 0.1, size=n_frames)
        far = rng.normal(1.5, 0.3, size=n_frames)
        distances = np.clip(np.where(speechlike, near, far), 0.01, None)
        azimuth_col = np.full(n_frames, azimuths[k])
        faces.append(FaceTrack(label, times, distances, visible, azimuth_col))
        avc_streams.append(AvcStream(label, times, distances, visible))
    return faces, avc_streams


def _speaker_centroids(scenario, rng) -> dict[str, np.ndarray]:
    """Unit centroids at >= 45 degrees pairwise separation, plus a silence cloud.

    Consecutive speakers are pulled toward each other by a seed-dependent
    amount so clustering difficulty varies across scenarios the way real
    voice similarity does.
    """
    dim = scenario.embedding_dim
    if dim < scenario.n_speakers + 1:
        raise ValueError("embedding_dim must exceed n_speakers")
    basis, _ = np.linalg.qr(rng.standard_normal((dim, scenario.n_speakers + 1)))
    mixes = rng.uniform(0.2, 1.0, size=scenario.n_speakers)
    centroids: dict[str, np.ndarray] = {}
    prev = basis[:, 0]
    for k, label in enumerate(scenario.speaker_labels()):
        if k == 0:
            vec = basis[:, 0]
        else:
            vec = basis[:, k] + mixes[k] * prev
            vec = vec / np.linalg.norm(vec)
        centroids[label] = vec
        prev = vec
    centroids["__silence__"] = basis[:, scenario.n_speakers]
    labels = scenario.speaker_labels()
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            cos = float(centroids[labels[i]] @ centroids[labels[j]])
            if cos > math.cos(math.radians(45.0)) + 1e-9:
                raise AssertionError("centroid separation fell below 45 degrees")
    return centroids


def _render_embeddings(scenario, reference: Timeline, faces: list[FaceTrack], rng):
    """Embedding records covering both speech windows and AVC candidate windows."""
    centroids = _speaker_centroids(scenario, rng)
    windows: dict[int, tuple[float, float]] = {}
    for start, end in window_speech(speech_support(reference)):
        windows.setdefault(int(round(start * 1000.0)), (start, end))
    for face in faces:
        for lo, hi in visible_runs(face.visible):
            t0, t1 = face.times[lo], face.times[hi - 1]
            start = t0
            while start + WINDOW_S <= t1 + 1e-9:
                windows.setdefault(int(round(start * 1000.0)), (start, start + WINDOW_S))
                start += HOP_S
    segs = [(s.onset, s.offset, s.speaker) for s in reference]
    records = []
    sigma = scenario.embedding_sigma
    dim = scenario.embedding_dim
    for key in sorted(windows):
        start, end = windows[key]
        overlaps: dict[str, float] = {}
        for on, off, speaker in segs:
            dt = min(end, off) - max(start, on)
            if dt > 0:
                overlaps[speaker] = overlaps.get(speaker, 0.0) + dt
        total_speech = sum(overlaps.values())
        if total_speech < 0.5 * (end - start):
            owner = "__silence__"
        else:
            owner = max(sorted(overlaps), key=lambda s: overlaps[s])
        noise = rng.standard_normal(dim)
        vec = centroids[owner] + sigma * noise / math.sqrt(dim)
        records.append((start, end, vec / np.linalg.norm(vec)))
    speaker_centroids = {k: v for k, v in centroids.items() if not k.startswith("__")}
    return records, speaker_centroids
