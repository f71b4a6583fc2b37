"""Audio-visual speaker diarisation engine.

Speaker models are self-enrolled from audio-visual correspondence scores,
then fused with per-window model scores and sound-source direction to
decide who speaks when; hypotheses are exchanged as RTTM and evaluated
with a collar-aware DER scorer.
"""

from .audio import MfccConfig, MultichannelAudio, VadConfig, energy_vad, mfcc, read_wav, write_wav
from .avc import AvcStream, FaceTrack, avc_confidence, confident_segments, load_avc, smooth_median
from .config import PipelineConfig, load_config
from .fusion import FusionFrame, FusionWeights, decide, fuse
from .localization import (
    AMI8,
    ArrayGeometry,
    azimuth_from_tdoas,
    azimuth_histogram,
    bformat_azimuth,
    circular_array,
    doa_term,
    gcc_phat,
)
from .pipeline import run_diarize
from .scoring import DerReport, format_report, optimal_mapping, score_der
from .simulator import Scenario, SimulationBundle, load_scenario, simulate
from .speaker import (
    EmbeddingWindow,
    FileEmbeddingProvider,
    SpeakerModel,
    StubEmbeddingProvider,
    ahc_cluster,
    baseline_diarize,
    enroll,
    score_sm,
    window_speech,
)
from .timeline import Segment, Timeline, emit_rttm, merge_gaps, parse_rttm

__version__ = "0.1.0"
