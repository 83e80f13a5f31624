"""Feature selection and Bayesian-tuned RBF-SVM pipeline for CNN-derived
chest X-ray feature vectors."""

from .errors import (
    ConvergenceError,
    CxrPipeError,
    FormatError,
    InvalidInputError,
    NumericError,
    StageError,
)
from .featurestore import (
    FeatureMatrix,
    LabelVector,
    SplitPlan,
    StandardizationParams,
    apply_standardizer,
    balance_downsample,
    fit_standardizer,
    read_fmx,
    read_labels,
    read_manifest,
    split_holdout,
    write_fmx,
    write_labels,
    write_manifest,
)
from .selection import (
    Ranking,
    ScoreVector,
    SelectionResult,
    chi_square_scores,
    elbow_cutoff,
    rank_features,
    relieff_scores,
    select_by_elbow,
    select_subset,
)
from .svm import (
    CvSpec,
    SvmHyperparams,
    SvmModel,
    cv_loss,
    decision_values,
    kkt_residual,
    load_model,
    predict,
    rbf_kernel,
    save_model,
    smo_train,
)
from .bayesopt import (
    GpPosterior,
    Observation,
    SearchSpace,
    TuneResult,
    expected_improvement,
    gp_fit,
    gp_posterior,
    tune,
)
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics, confusion
from .runner import (
    CascadeModel,
    ExperimentConfig,
    ExperimentReport,
    cascade_predict,
    render_report,
    resolve_task,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "CascadeModel",
    "ConfusionMatrix",
    "ConvergenceError",
    "CvSpec",
    "CxrPipeError",
    "ExperimentConfig",
    "ExperimentReport",
    "FeatureMatrix",
    "FormatError",
    "GpPosterior",
    "InvalidInputError",
    "LabelVector",
    "MetricsReport",
    "NumericError",
    "Observation",
    "Ranking",
    "ScoreVector",
    "SearchSpace",
    "SelectionResult",
    "SplitPlan",
    "StageError",
    "StandardizationParams",
    "SvmHyperparams",
    "SvmModel",
    "TuneResult",
    "apply_standardizer",
    "balance_downsample",
    "cascade_predict",
    "chi_square_scores",
    "compute_metrics",
    "confusion",
    "cv_loss",
    "decision_values",
    "elbow_cutoff",
    "expected_improvement",
    "fit_standardizer",
    "gp_fit",
    "gp_posterior",
    "kkt_residual",
    "load_model",
    "predict",
    "rank_features",
    "rbf_kernel",
    "read_fmx",
    "read_labels",
    "read_manifest",
    "relieff_scores",
    "render_report",
    "resolve_task",
    "run_experiment",
    "save_model",
    "select_by_elbow",
    "select_subset",
    "smo_train",
    "split_holdout",
    "tune",
    "write_fmx",
    "write_labels",
    "write_manifest",
]
