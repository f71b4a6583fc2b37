"""Pipeline configuration: flat key=value files with validated ranges.

Tuned defaults (alpha, beta, ahc_threshold, enroll_threshold) come from a
grid search over held-out simulator validation scenarios; see
scripts/tune_defaults.py.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .localization import AMI8, ArrayGeometry

__all__ = [
    "PipelineConfig",
    "ConfigError",
    "load_config",
    "parse_array_spec",
    "resolve_geometry",
]


class ConfigError(ValueError):
    """Unknown key or out-of-range value in a pipeline configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    array: str = "ami8"  # "ami8" | "bformat" | "x,y;x,y;..." custom positions
    vad_frame_s: float = 0.030
    vad_threshold_db: float = 10.0
    vad_hangover: int = 5
    vad_floor_cap_db: float = -30.0
    vad_merge_gap_s: float = 0.3
    enroll_threshold: float = 0.35
    n_enroll: int = 10
    avc_tau: float = 0.5
    median_width: int = 25
    avc_offset_frames: int = 0
    alpha: float = 0.4
    beta: float = 0.1
    min_score: float = 0.1
    min_duration_s: float = 0.3
    ahc_threshold: float = 0.5
    embedding: str = "stub"  # "stub" | "file"
    ssl_bin_width: float = 10.0
    ssl_orientation_offset: float = 0.0
    ssl_frame_s: float = 0.25
    ssl_hop_s: float = 0.25
    speed_of_sound: float = 343.0

    def __post_init__(self):
        checks = [
            ("vad_frame_s", 0.005 <= self.vad_frame_s <= 0.2),
            ("vad_threshold_db", 0.0 < self.vad_threshold_db <= 60.0),
            ("vad_hangover", 0 <= self.vad_hangover <= 200),
            ("vad_floor_cap_db", -120.0 <= self.vad_floor_cap_db <= 0.0),
            ("vad_merge_gap_s", 0.0 <= self.vad_merge_gap_s <= 5.0),
            ("enroll_threshold", 0.0 <= self.enroll_threshold < 1.0),
            ("n_enroll", 1 <= self.n_enroll <= 1000),
            ("avc_tau", self.avc_tau > 0.0),
            ("median_width", self.median_width >= 1 and self.median_width % 2 == 1),
            ("alpha", self.alpha >= 0.0),
            ("beta", self.beta >= 0.0),
            ("min_score", -3.0 <= self.min_score <= 3.0),
            ("min_duration_s", 0.0 <= self.min_duration_s <= 5.0),
            ("ahc_threshold", -1.0 <= self.ahc_threshold <= 2.0),
            ("embedding", self.embedding in ("stub", "file")),
            ("ssl_bin_width", self.ssl_bin_width > 0 and abs(360.0 / self.ssl_bin_width - round(360.0 / self.ssl_bin_width)) < 1e-9),
            ("ssl_frame_s", 0.02 <= self.ssl_frame_s <= 2.0),
            ("ssl_hop_s", 0.01 <= self.ssl_hop_s <= 2.0),
            ("speed_of_sound", 100.0 <= self.speed_of_sound <= 500.0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"config value out of range: {name} = {getattr(self, name)!r}")


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def load_config(text: str) -> PipelineConfig:
    """Parse a flat ``key = value`` configuration (# starts a comment)."""
    values: dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no}: expected 'key = value'")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"config line {line_no}: unknown key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            if kind == "int":
                values[key] = int(value)
            elif kind == "float":
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(f"config line {line_no}: bad value for {key}: {value!r}") from None
    return PipelineConfig(**values)


def parse_array_spec(spec: str, speed_of_sound: float = 343.0) -> ArrayGeometry | None:
    """Geometry for an array spec; None selects the B-format path."""
    if spec == "ami8":
        return ArrayGeometry(AMI8.mic_positions, speed_of_sound)
    if spec == "bformat":
        return None
    try:
        positions = tuple(
            (float(pair.split(",")[0]), float(pair.split(",")[1]))
            for pair in spec.split(";")
        )
    except (ValueError, IndexError):
        raise ConfigError(
            f"array must be 'ami8', 'bformat', or 'x,y;x,y;...' positions, got {spec!r}"
        ) from None
    return ArrayGeometry(positions, speed_of_sound)


def resolve_geometry(config: PipelineConfig) -> ArrayGeometry | None:
    return parse_array_spec(config.array, config.speed_of_sound)
