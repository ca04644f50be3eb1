"""diarlab: a speaker diarization laboratory.

Simulated conversation mixtures with capped-exponential silence gaps, a
log-Mel frontend, a forward-only attractor diarization network at
configurable scale, exact DER/MSCE scoring, and RTF benchmarking.
"""

from .annotations import (
    ActivityMatrix,
    Annotation,
    RttmParseError,
    SpeakerTurn,
    activity_to_annotation,
    overlap_components,
    overlap_ratio,
    parse_rttm,
    parse_rttm_file,
    speaker_silence_gaps,
    to_activity,
    write_rttm,
    write_rttm_file,
)
from .features import FeatureConfig, FeatureMatrix, extract_logmel, mel_filterbank_matrix
from .model import (
    AttractorSet,
    DiarizationResult,
    EncoderOutput,
    ModelConfig,
    ModelWeights,
    average_checkpoints,
    compute_attractors,
    conv_downsample,
    count_speakers,
    diarize,
    encode_with_summary,
    init_weights,
    load_weights,
    parameter_count,
    run_inference,
    save_weights,
)
from .pipeline import PipelineConfig, load_pipeline_config
from .rtf import RtfReport, rtf_measure
from .scoring import (
    DERBreakdown,
    ScoreReport,
    ScoringConfig,
    compute_der,
    grouped_report,
    msce,
    optimal_speaker_map,
)
from .simulator import (
    DEFAULT_SILENCE_MEANS,
    CorpusIndex,
    CorpusUtterance,
    Mixture,
    SimConfig,
    corpus_stats,
    derive_silence_means,
    generate_mixtures,
    sample_silence,
    seen_percentage,
    simulate_mixture,
)

__version__ = "0.1.0"
