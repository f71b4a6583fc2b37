"""Multi-channel WAV ingestion, MFCC extraction, and energy-based speech detection."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .timeline import Segment, Timeline, merge_gaps

__all__ = [
    "MultichannelAudio",
    "MfccConfig",
    "MfccMatrix",
    "VadConfig",
    "WavFormatError",
    "read_wav",
    "write_wav",
    "mfcc",
    "mel_filterbank",
    "energy_vad",
]

SUPPORTED_RATES = (16000, 48000)


class WavFormatError(ValueError):
    """Unsupported or corrupt RIFF/WAVE content."""


@dataclass(frozen=True)
class MultichannelAudio:
    """De-interleaved audio: ``samples`` has shape (n_channels, n_samples), in [-1, 1]."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ValueError("samples must be a (n_channels, n_samples) array with >= 1 channel")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.samples.shape[1] / self.sample_rate

    def channel(self, index: int) -> np.ndarray:
        return self.samples[index]


def _read_exact(data: bytes, offset: int, size: int, chunk: str) -> bytes:
    if offset + size > len(data):
        raise WavFormatError(f"truncated {chunk} chunk: need {size} bytes at offset {offset}")
    return data[offset : offset + size]


def read_wav(data: bytes) -> MultichannelAudio:
    """Decode a RIFF/WAVE byte stream (PCM 16-bit or IEEE float 32-bit)."""
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE stream (missing RIFF header)")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body_label = cid.decode("ascii", errors="replace").strip()
        body = _read_exact(data, pos + 8, size, body_label)
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError("truncated fmt chunk: need at least 16 bytes")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if payload is None:
        raise WavFormatError("missing data chunk")
    audio_format, n_channels, sample_rate, _, block_align, bits = fmt
    if n_channels < 1:
        raise WavFormatError("fmt chunk declares zero channels")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        scaled = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        scaled = raw.astype(np.float64)
    else:
        raise WavFormatError(
            f"unsupported codec in fmt chunk: format tag {audio_format}, {bits}-bit "
            "(expected PCM 16-bit or IEEE float 32-bit)"
        )
    n_frames = scaled.size // n_channels
    if n_frames * n_channels != scaled.size:
        raise WavFormatError("truncated data chunk: sample count not divisible by channel count")
    samples = scaled[: n_frames * n_channels].reshape(n_frames, n_channels).T.copy()
    return MultichannelAudio(sample_rate=sample_rate, samples=samples)


def write_wav(audio: MultichannelAudio, encoding: str = "float32") -> bytes:
    """Encode audio as RIFF/WAVE bytes; ``encoding`` is ``float32`` or ``pcm16``."""
    interleaved = np.ascontiguousarray(audio.samples.T)
    if encoding == "float32":
        payload = interleaved.astype("<f4").tobytes()
        fmt_tag, bits = 3, 32
    elif encoding == "pcm16":
        clipped = np.clip(interleaved, -1.0, 32767.0 / 32768.0)
        payload = (np.round(clipped * 32768.0).astype("<i2")).tobytes()
        fmt_tag, bits = 1, 16
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    n_channels = audio.n_channels
    block_align = n_channels * bits // 8
    fmt_body = struct.pack(
        "<HHIIHH", fmt_tag, n_channels, audio.sample_rate,
        audio.sample_rate * block_align, block_align, bits,
    )
    chunks = b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


@dataclass(frozen=True)
class MfccConfig:
    n_coeffs: int = 24
    hop_s: float = 0.010
    frame_s: float = 0.025
    n_mels: int = 26
    fft_size: int | None = None  # next power of two >= frame length when None
    preemphasis: float = 0.97
    log_floor: float = 1e-10


@dataclass(frozen=True)
class MfccMatrix:
    """Rows of cepstral coefficients; one row per ``frame_hop`` seconds."""

    frames: np.ndarray
    frame_hop: float
    frame_length: float


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters spanning 0..Nyquist, shape (n_mels, fft_size//2 + 1)."""
    points = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), n_mels + 2))
    bins = np.floor((fft_size + 1) * points / sample_rate).astype(int)
    bank = np.zeros((n_mels, fft_size // 2 + 1))
    for m in range(n_mels):
        lo, mid, hi = bins[m], bins[m + 1], bins[m + 2]
        for k in range(lo, mid):
            bank[m, k] = (k - lo) / max(mid - lo, 1)
        for k in range(mid, hi):
            bank[m, k] = (hi - k) / max(hi - mid, 1)
    return bank


def mfcc(channel: np.ndarray, sample_rate: int, config: MfccConfig = MfccConfig()) -> MfccMatrix:
    """Extract MFCC rows every ``hop_s`` seconds from one audio channel.

    Per frame: pre-emphasis, Hamming window, power spectrum, triangular mel
    filterbank, floored log, orthonormal DCT-II keeping the first
    ``n_coeffs`` coefficients. A channel shorter than one frame yields an
    empty matrix.
    """
    if sample_rate < 8000:
        raise ValueError(f"sample_rate must be >= 8000, got {sample_rate}")
    x = np.asarray(channel, dtype=np.float64)
    frame_len = int(round(config.frame_s * sample_rate))
    hop = int(round(config.hop_s * sample_rate))
    fft_size = config.fft_size
    if fft_size is None:
        fft_size = 1
        while fft_size < frame_len:
            fft_size *= 2
    if x.size < frame_len:
        return MfccMatrix(np.zeros((0, config.n_coeffs)), config.hop_s, config.frame_s)
    n_frames = (x.size - frame_len) // hop + 1
    starts = np.arange(n_frames) * hop
    frames = x[starts[:, None] + np.arange(frame_len)[None, :]]
    emphasized = frames.copy()
    emphasized[:, 1:] -= config.preemphasis * frames[:, :-1]
    windowed = emphasized * np.hamming(frame_len)
    power = np.abs(np.fft.rfft(windowed, n=fft_size, axis=1)) ** 2
    bank = mel_filterbank(config.n_mels, fft_size, sample_rate)
    energies = np.log(np.maximum(power @ bank.T, config.log_floor))
    coeffs = scipy.fft.dct(energies, type=2, axis=1, norm="ortho")[:, : config.n_coeffs]
    return MfccMatrix(coeffs, config.hop_s, config.frame_s)


@dataclass(frozen=True)
class VadConfig:
    frame_s: float = 0.030
    threshold_db: float = 10.0
    hangover_frames: int = 5
    floor_percentile: float = 10.0
    floor_cap_db: float = -30.0  # keeps all-speech files detectable
    merge_gap_s: float = 0.3


def energy_vad(
    channel: np.ndarray,
    sample_rate: int,
    config: VadConfig = VadConfig(),
    source_id: str = "audio",
) -> Timeline:
    """Mark frames whose log-energy exceeds the noise floor plus a margin.

    The floor is a low percentile of per-frame energy, capped from above so
    a recording with no silent frames still registers as speech. Speech
    state is held for ``hangover_frames`` after the energy drops, and the
    resulting segments are smoothed with a 0.3 s gap merge.
    """
    x = np.asarray(channel, dtype=np.float64)
    if x.size == 0:
        raise ValueError("energy_vad requires a non-empty channel")
    frame_len = int(round(config.frame_s * sample_rate))
    n_frames = x.size // frame_len
    if n_frames == 0:
        return Timeline((), source_id)
    frames = x[: n_frames * frame_len].reshape(n_frames, frame_len)
    level_db = 10.0 * np.log10(np.mean(frames**2, axis=1) + 1e-12)
    floor_db = min(np.percentile(level_db, config.floor_percentile), config.floor_cap_db)
    active = level_db > floor_db + config.threshold_db
    speech = np.zeros(n_frames, dtype=bool)
    hold = 0
    for i, on in enumerate(active):
        if on:
            hold = config.hangover_frames + 1
        if hold > 0:
            speech[i] = True
            hold -= 1
    duration = x.size / sample_rate
    segments = []
    i = 0
    while i < n_frames:
        if speech[i]:
            j = i
            while j + 1 < n_frames and speech[j + 1]:
                j += 1
            start = i * config.frame_s
            end = duration if j == n_frames - 1 else (j + 1) * config.frame_s
            segments.append(Segment.from_seconds(start, end - start, "speech"))
            i = j + 1
        else:
            i += 1
    return merge_gaps(Timeline(tuple(segments), source_id), config.merge_gap_s)
