"""Split-conformal label sets and weighted-labeling bootstrap for outcome estimation."""
from ._backend import BACKEND
from .bootstrap import BootstrapSummary, percentile_interval, resample_indices, run_bootstrap
from .conformal import (
    AmbiguityProfile,
    SplitIndices,
    ThresholdVector,
    ambiguity_profile,
    build_label_sets,
    class_coverage,
    estimate_thresholds,
    split_development,
)
from .core import (
    ClassProbabilities,
    FeatureMatrix,
    LabeledDataset,
    LabelSets,
    LabelSpace,
    RngSpec,
    SurvivalData,
    validate_dataset,
)
from .estimators import MultinomialModel, OptConfig, Penalty, fit_multinomial, ingest_probabilities, predict_proba
from .labeling import LabelerKind, argmax_label, sample_label, sample_labels
from .metrics import ClassMetrics, ConfusionCounts, calibration_bins, class_metrics, confusion_counts
from .survival import (
    KMCurve,
    kaplan_meier,
    median_survival,
    repetition_interval,
    stratified_estimates,
    survival_at,
    survival_bias,
)

__version__ = "0.1.0"
