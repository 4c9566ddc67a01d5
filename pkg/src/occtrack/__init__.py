"""Correlation-filter visual tracker with explicit occlusion handling."""

from .dcf import (
    AdmmParams,
    AdmmTrace,
    FilterModel,
    blend_models,
    compute_response,
    compute_spatial_mask,
    dump_model,
    learn_filter,
    load_model,
)
from .errors import (
    BadSpec,
    DegenerateQuality,
    DegenerateResponse,
    InitFailed,
    NeedsColor,
    NumericalBlowup,
    PatchOutOfFrame,
    PatchTooSmall,
    ShapeMismatch,
    TrackError,
)
from .features import FeatureParams, FeatureStack, assemble, extract_colornames, extract_hog
from .harness import (
    EvalReport,
    RunResult,
    Sequence,
    SynthSpec,
    evaluate,
    iou,
    load_config,
    load_sequence,
    run_tracker,
    save_sequence,
    synth_sequence,
)
from .imaging import BBox, extract_patch, gaussian_label
from .quality import (
    QualityHistory,
    QualityParams,
    ResponseMap,
    apce,
    localization_quality,
    normalize_response,
    occlusion_trigger,
    psr,
    q_measure,
)
from .scale import ScaleConfig, fuse_scale, logpolar_transform, phase_correlation
from .tracker import FrameDiagnostics, TrackerConfig, TrackerState, init, step

__version__ = "0.1.0"

__all__ = [
    "AdmmParams",
    "AdmmTrace",
    "BBox",
    "BadSpec",
    "DegenerateQuality",
    "DegenerateResponse",
    "EvalReport",
    "FeatureParams",
    "FeatureStack",
    "FilterModel",
    "FrameDiagnostics",
    "InitFailed",
    "NeedsColor",
    "NumericalBlowup",
    "PatchOutOfFrame",
    "PatchTooSmall",
    "QualityHistory",
    "QualityParams",
    "ResponseMap",
    "RunResult",
    "ScaleConfig",
    "Sequence",
    "ShapeMismatch",
    "SynthSpec",
    "TrackError",
    "TrackerConfig",
    "TrackerState",
    "apce",
    "assemble",
    "blend_models",
    "compute_response",
    "compute_spatial_mask",
    "dump_model",
    "evaluate",
    "extract_colornames",
    "extract_hog",
    "extract_patch",
    "fuse_scale",
    "gaussian_label",
    "init",
    "iou",
    "learn_filter",
    "load_config",
    "load_model",
    "load_sequence",
    "localization_quality",
    "logpolar_transform",
    "normalize_response",
    "occlusion_trigger",
    "phase_correlation",
    "psr",
    "q_measure",
    "run_tracker",
    "save_sequence",
    "step",
    "synth_sequence",
]
