"""Sound-source localisation: GCC-PHAT TDOA, azimuth solving, and histogram smoothing."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .audio import MultichannelAudio

__all__ = [
    "ArrayGeometry",
    "circular_array",
    "AMI8",
    "PairwiseAzimuth",
    "AzimuthHistogram",
    "DoAEstimate",
    "gcc_phat",
    "azimuth_from_tdoas",
    "bformat_azimuth",
    "azimuth_histogram",
    "doa_term",
    "tdoa_theta_stream",
    "bformat_theta_stream",
]


@dataclass(frozen=True)
class ArrayGeometry:
    """Planar microphone positions (meters, array frame) and propagation speed."""

    mic_positions: tuple[tuple[float, float], ...]
    speed_of_sound: float = 343.0

    def __post_init__(self):
        if len(self.mic_positions) < 2:
            raise ValueError("geometry needs at least 2 microphones")
        pts = np.asarray(self.mic_positions)
        for i, j in itertools.combinations(range(len(pts)), 2):
            if np.linalg.norm(pts[i] - pts[j]) <= 0:
                raise ValueError(f"mics {i} and {j} are co-located")

    @property
    def n_mics(self) -> int:
        return len(self.mic_positions)

    def pairs(self) -> list[tuple[int, int]]:
        return list(itertools.combinations(range(self.n_mics), 2))

    def max_pair_delay(self) -> float:
        """Largest possible |TDOA| in seconds for any mic pair."""
        pts = np.asarray(self.mic_positions)
        dists = [np.linalg.norm(pts[i] - pts[j]) for i, j in self.pairs()]
        return max(dists) / self.speed_of_sound


def circular_array(n_mics: int, diameter: float, speed_of_sound: float = 343.0) -> ArrayGeometry:
    """Equi-spaced circular array; mic 0 at +x, counter-clockwise."""
    radius = diameter / 2.0
    angles = 2.0 * np.pi * np.arange(n_mics) / n_mics
    positions = tuple((radius * float(np.cos(a)), radius * float(np.sin(a))) for a in angles)
    return ArrayGeometry(positions, speed_of_sound)


# 8-element equi-spaced circle, 0.20 m diameter
AMI8 = circular_array(8, 0.20)


def gcc_phat(
    sig_a: np.ndarray,
    sig_b: np.ndarray,
    sample_rate: int,
    max_lag: float,
) -> tuple[float, float]:
    """PHAT-weighted cross-correlation delay of ``sig_b`` relative to ``sig_a``.

    Returns ``(tdoa_seconds, peak)`` where tdoa is positive when ``sig_b``
    lags ``sig_a``. The integer-lag peak within ``±max_lag`` is refined by
    3-point parabolic interpolation.
    """
    a = np.asarray(sig_a, dtype=np.float64)
    b = np.asarray(sig_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("signals must be equal-length 1-D vectors")
    if a.size < 256:
        raise ValueError(f"signals must have >= 256 samples, got {a.size}")
    if max_lag <= 0 or max_lag > a.size / (2.0 * sample_rate):
        raise ValueError(f"max_lag must be in (0, n/(2*fs)], got {max_lag}")
    if not np.any(a) or not np.any(b):
        raise ValueError("degenerate signal: all-zero input")
    n = a.size + b.size
    spec_a = np.fft.rfft(a, n=n)
    spec_b = np.fft.rfft(b, n=n)
    cross = np.conj(spec_a) * spec_b
    cross /= np.maximum(np.abs(cross), 1e-12)
    cc = np.fft.irfft(cross, n=n)
    max_shift = max(int(round(max_lag * sample_rate)), 1)
    window = np.concatenate((cc[-max_shift:], cc[: max_shift + 1]))
    peak_idx = int(np.argmax(window))
    shift = peak_idx - max_shift
    if 0 < peak_idx < window.size - 1:
        c_m, c_0, c_p = window[peak_idx - 1], window[peak_idx], window[peak_idx + 1]
        denom = c_m - 2.0 * c_0 + c_p
        delta = 0.0 if abs(denom) < 1e-15 else 0.5 * (c_m - c_p) / denom
        delta = float(np.clip(delta, -1.0, 1.0))
        peak = float(c_0 - 0.25 * (c_m - c_p) * delta)
    else:
        delta = 0.0
        peak = float(window[peak_idx])
    return (shift + delta) / sample_rate, peak


@dataclass(frozen=True)
class PairwiseAzimuth:
    theta_deg: float
    residual_rms: float  # seconds, RMS over pairs at the solution
    consistent: bool


def azimuth_from_tdoas(
    tdoas: dict[tuple[int, int], float],
    geometry: ArrayGeometry,
    residual_tol: float = 1e-4,
) -> PairwiseAzimuth:
    """Far-field azimuth minimizing squared TDOA mismatch over mic pairs.

    For pair ``(i, j)`` the observed value must follow the ``gcc_phat``
    convention: arrival at mic i minus arrival at mic j, i.e.
    ``(p_i - p_j) . u(theta) / c``. A 1-degree grid search is refined on a
    0.01-degree local grid; a residual above ``residual_tol`` flags the
    estimate as low-confidence instead of raising.
    """
    if len(tdoas) < 1:
        raise ValueError("need at least 1 mic pair")
    pts = np.asarray(geometry.mic_positions)
    pairs = list(tdoas.keys())
    baselines = np.stack([pts[i] - pts[j] for i, j in pairs])  # (n_pairs, 2)
    observed = np.array([tdoas[p] for p in pairs])

    def residuals(theta_deg: np.ndarray) -> np.ndarray:
        rad = np.deg2rad(theta_deg)
        unit = np.stack([np.cos(rad), np.sin(rad)])  # (2, n_theta)
        predicted = baselines @ unit / geometry.speed_of_sound
        return np.sum((observed[:, None] - predicted) ** 2, axis=0)

    coarse = np.arange(0.0, 360.0, 1.0)
    best = coarse[int(np.argmin(residuals(coarse)))]
    fine = best + np.arange(-1.0, 1.0 + 1e-9, 0.01)
    theta = float(fine[int(np.argmin(residuals(fine)))]) % 360.0
    rms = float(np.sqrt(residuals(np.array([theta]))[0] / len(pairs)))
    return PairwiseAzimuth(theta, rms, rms <= residual_tol)


def bformat_azimuth(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float | None:
    """Time-averaged intensity azimuth of a first-order B-format window.

    Returns None (undefined direction) when the intensity magnitude is
    below 1e-9.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (w.shape == x.shape == y.shape) or w.ndim != 1:
        raise ValueError("W/X/Y windows must be equal-length 1-D vectors")
    if w.size < 64:
        raise ValueError(f"windows must have >= 64 samples, got {w.size}")
    ix = float(np.dot(w, x))
    iy = float(np.dot(w, y))
    if np.hypot(ix, iy) < 1e-9:
        return None
    return float(np.degrees(np.arctan2(iy, ix)) % 360.0)


@dataclass(frozen=True)
class DoAEstimate:
    frame_time: float
    theta: float  # modal bin center, degrees in [0, 360)
    confidence: float  # fraction of context samples in the modal bin


@dataclass(frozen=True)
class AzimuthHistogram:
    """Binned azimuth samples from a symmetric context window around one frame."""

    bin_width: float
    counts: np.ndarray
    frame_time: float
    context: float = 0.5
    orientation_offset: float = 0.0

    def bin_of(self, theta_deg: float) -> int:
        return int(((theta_deg - self.orientation_offset) % 360.0) // self.bin_width)

    def bin_center(self, index: int) -> float:
        return float((self.orientation_offset + (index + 0.5) * self.bin_width) % 360.0)

    def estimate(self, prev_theta: float | None = None) -> DoAEstimate | None:
        """Modal-bin direction; ties prefer the previous frame's bin, then the lowest index."""
        total = int(self.counts.sum())
        if total == 0:
            return None
        top = int(self.counts.max())
        tied = np.flatnonzero(self.counts == top)
        pick = int(tied[0])
        if prev_theta is not None and self.bin_of(prev_theta) in tied:
            pick = self.bin_of(prev_theta)
        return DoAEstimate(self.frame_time, self.bin_center(pick), top / total)


def azimuth_histogram(
    times: np.ndarray,
    thetas: np.ndarray,
    frame_time: float,
    bin_width: float,
    context: float = 0.5,
    orientation_offset: float = 0.0,
) -> AzimuthHistogram:
    """Histogram of azimuth samples within ``±context`` seconds of ``frame_time``."""
    if bin_width <= 0 or abs(360.0 / bin_width - round(360.0 / bin_width)) > 1e-9:
        raise ValueError(f"bin_width must divide 360, got {bin_width}")
    times = np.asarray(times, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    n_bins = int(round(360.0 / bin_width))
    mask = np.abs(times - frame_time) <= context + 1e-9
    indices = (((thetas[mask] - orientation_offset) % 360.0) // bin_width).astype(int)
    counts = np.bincount(indices, minlength=n_bins)[:n_bins]
    return AzimuthHistogram(bin_width, counts, frame_time, context, orientation_offset)


def doa_term(theta_deg: float, phi_face_deg: float) -> float:
    """Directional agreement score cos(phi - theta) in [-1, 1]."""
    return float(np.cos(np.deg2rad(phi_face_deg - theta_deg)))


def _voiced_frame_mask(frames: np.ndarray, threshold_db: float, floor_cap_db: float) -> np.ndarray:
    level_db = 10.0 * np.log10(np.mean(frames**2, axis=1) + 1e-12)
    floor_db = min(np.percentile(level_db, 10.0), floor_cap_db)
    return level_db > floor_db + threshold_db


def _frame_grid(n_samples: int, sample_rate: int, frame_s: float, hop_s: float):
    frame_len = int(round(frame_s * sample_rate))
    hop = int(round(hop_s * sample_rate))
    n_frames = max((n_samples - frame_len) // hop + 1, 0)
    starts = np.arange(n_frames) * hop
    centers = (starts + frame_len / 2.0) / sample_rate
    return frame_len, starts, centers


def tdoa_theta_stream(
    audio: MultichannelAudio,
    geometry: ArrayGeometry,
    frame_s: float = 0.25,
    hop_s: float = 0.25,
    threshold_db: float = 10.0,
    floor_cap_db: float = -30.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame azimuth samples (times, degrees) from pairwise GCC-PHAT.

    Frames whose reference-channel energy sits at the noise floor are
    skipped; they carry no usable direction.
    """
    if audio.n_channels != geometry.n_mics:
        raise ValueError(f"audio has {audio.n_channels} channels, geometry {geometry.n_mics} mics")
    frame_len, starts, centers = _frame_grid(audio.n_samples, audio.sample_rate, frame_s, hop_s)
    if starts.size == 0:
        return np.array([]), np.array([])
    ref_frames = audio.channel(0)[starts[:, None] + np.arange(frame_len)[None, :]]
    voiced = _voiced_frame_mask(ref_frames, threshold_db, floor_cap_db)
    max_lag = min(1.5 * geometry.max_pair_delay(), frame_len / (2.0 * audio.sample_rate))
    times, thetas = [], []
    for k in np.flatnonzero(voiced):
        s = starts[k]
        window = audio.samples[:, s : s + frame_len]
        try:
            tdoas = {
                (i, j): gcc_phat(window[i], window[j], audio.sample_rate, max_lag)[0]
                for i, j in geometry.pairs()
            }
        except ValueError:
            continue  # silent channel within an otherwise voiced frame
        times.append(centers[k])
        thetas.append(azimuth_from_tdoas(tdoas, geometry).theta_deg)
    return np.array(times), np.array(thetas)


def bformat_theta_stream(
    audio: MultichannelAudio,
    frame_s: float = 0.25,
    hop_s: float = 0.25,
    threshold_db: float = 10.0,
    floor_cap_db: float = -30.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame azimuth samples from a W,X,Y,Z-ordered B-format recording."""
    if audio.n_channels < 3:
        raise ValueError("B-format input needs at least W, X, Y channels")
    frame_len, starts, centers = _frame_grid(audio.n_samples, audio.sample_rate, frame_s, hop_s)
    if starts.size == 0:
        return np.array([]), np.array([])
    w_frames = audio.channel(0)[starts[:, None] + np.arange(frame_len)[None, :]]
    voiced = _voiced_frame_mask(w_frames, threshold_db, floor_cap_db)
    times, thetas = [], []
    for k in np.flatnonzero(voiced):
        s = starts[k]
        theta = bformat_azimuth(
            audio.channel(0)[s : s + frame_len],
            audio.channel(1)[s : s + frame_len],
            audio.channel(2)[s : s + frame_len],
        )
        if theta is not None:
            times.append(centers[k])
            thetas.append(theta)
    return np.array(times), np.array(thetas)
