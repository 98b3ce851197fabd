"""Segmentation and petrophysics toolkit for reconstructed micro-CT volumes."""

from .volume import (
    LabelVolume,
    Roi,
    VoxelVolume,
    crop,
    crop_labels,
    downsample,
    export_csv,
    export_raw,
    export_vtk,
    load_raw,
    load_tiff_stack,
)
from .filters import AdParams, NlmParams, anisotropic_diffusion, contrast_stretch, nlm_filter, smooth
from .clustering import ClusterResult, FcmConfig, KmeansConfig, fcm_segment, kmeans_segment
from .supervised import (
    EnsembleModel,
    FeatureMatrix,
    LssvmModel,
    TrainingRow,
    TrainingTable,
    classify_volume,
    cross_validate,
    extract_features,
    load_model,
    roc_curve,
    save_model,
    segmentation_entropy,
    train_ensemble,
    train_lssvm,
)
from .ede import (
    EdeConfig,
    EdeResult,
    Phase,
    PhaseMap,
    PhaseStats,
    default_phase_map,
    dual_cluster_pipeline,
    phase_index_stats,
    rescale_phases,
)
from .petro import (
    PorosityTrend,
    PsdResult,
    RevCurve,
    pore_size_distribution,
    porosity,
    porosity_trend,
    rev_curve,
    volume_fractions,
)

__version__ = "0.1.0"

__all__ = [
    "VoxelVolume", "LabelVolume", "Roi",
    "load_raw", "load_tiff_stack", "crop", "crop_labels", "downsample",
    "export_raw", "export_vtk", "export_csv",
    "NlmParams", "AdParams", "nlm_filter", "anisotropic_diffusion", "smooth", "contrast_stretch",
    "KmeansConfig", "FcmConfig", "ClusterResult", "kmeans_segment", "fcm_segment",
    "TrainingRow", "TrainingTable", "FeatureMatrix", "extract_features",
    "LssvmModel", "train_lssvm", "EnsembleModel", "train_ensemble",
    "classify_volume", "cross_validate", "roc_curve", "segmentation_entropy",
    "save_model", "load_model",
    "Phase", "PhaseMap", "PhaseStats", "default_phase_map",
    "phase_index_stats", "rescale_phases", "EdeConfig", "EdeResult", "dual_cluster_pipeline",
    "porosity", "porosity_trend", "volume_fractions",
    "pore_size_distribution", "rev_curve",
    "PorosityTrend", "PsdResult", "RevCurve",
    "__version__",
]
