"""Attraction recognition from VR biosignals.

Library + CLI covering multi-rate session ingestion with event-based
epoching, EEG/eye preprocessing, feature extraction and graph-based
selection, polynomial-kernel SVM classification with calibrated
posteriors, cross-validated evaluation, ROI/correlation factor
analysis, and a seeded synthetic-session oracle.
"""

from .core import (
    BinaryLabel,
    Category,
    QualityFlag,
    Roi,
    SampleStream,
    Session,
    StimulusEvent,
    StreamKind,
    Trial,
    binarize_label,
    epoch_extract,
    validate_session,
)
from .classify import (
    CvResult,
    Prediction,
    TrainSettings,
    TrainedModel,
    cross_validate,
    incremental_session,
    platt_calibrate,
    predict,
    train_model,
)
from .config import PipelineConfig, load_config, save_config
from .features import (
    FeatureMatrix,
    FeatureParams,
    FeatureVector,
    build_feature_matrix,
    canonical_feature_names,
    extract_all,
)
from .preprocess import (
    ArtifactReport,
    FilterSpec,
    bandpass_notch,
    ica_artifact_reject,
    pupil_light_reflex_remove,
    wavelet_despike,
)
from .selection import FeatureRanking, rank_features, select_top_k
from .session_io import load_session, save_session
from .svm import KernelParams
from .synth import GeneratorConfig, generate_corpus, generate_session

__version__ = "0.1.0"

__all__ = [
    "ArtifactReport",
    "BinaryLabel",
    "Category",
    "CvResult",
    "FeatureMatrix",
    "FeatureParams",
    "FeatureRanking",
    "FeatureVector",
    "FilterSpec",
    "GeneratorConfig",
    "KernelParams",
    "PipelineConfig",
    "Prediction",
    "QualityFlag",
    "Roi",
    "SampleStream",
    "Session",
    "StimulusEvent",
    "StreamKind",
    "TrainSettings",
    "TrainedModel",
    "Trial",
    "bandpass_notch",
    "binarize_label",
    "build_feature_matrix",
    "canonical_feature_names",
    "cross_validate",
    "epoch_extract",
    "extract_all",
    "generate_corpus",
    "generate_session",
    "ica_artifact_reject",
    "incremental_session",
    "load_config",
    "load_session",
    "platt_calibrate",
    "predict",
    "pupil_light_reflex_remove",
    "rank_features",
    "save_config",
    "save_session",
    "select_top_k",
    "train_model",
    "validate_session",
    "wavelet_despike",
]
