"""Partial-label learning on frozen feature embeddings.

Generates candidate-label datasets under uniform, flip-probability, and
instance-dependent regimes, filters candidates with zero-shot confidences,
and trains a cosine classifier with a family of disambiguation objectives.
"""

from .classifier import (
    CosineModel,
    FeatureAdapter,
    ObjectiveState,
    TrainConfig,
    TrainReport,
    fit,
    load_model,
    save_model,
    sgd_step,
)
from .data import LabelSpace, PLLDataset, ValidationReport, validate_dataset
from .errors import (
    ConfigError,
    FormatError,
    NumericalError,
    NumericalWarning,
    PLLError,
    PLLWarning,
    ShapeError,
)
from .estimator import PartialLabelCosineClassifier
from .formats import (
    read_candidates_file,
    read_features_csv,
    read_labels_file,
    read_matrix_file,
    write_candidates_file,
    write_labels_file,
    write_matrix_file,
)
from .generate import (
    AuxModel,
    GenSpec,
    LongTailSpec,
    gen_fps,
    gen_instance_dependent,
    gen_uss,
    generate_candidates,
    longtail_counts,
    subsample_longtail,
    train_aux_classifier,
)
from .metrics import (
    MetricBlock,
    accuracy,
    covering_oracle,
    evaluate_block,
    shot_accuracy,
    write_report,
)
from .objectives import (
    Objective,
    RecordsState,
    loss_abs_gce,
    loss_abs_mae,
    loss_cavl,
    loss_cc,
    loss_crd_feat,
    loss_lws,
    loss_weighted_ce,
    parse_objective,
    pop_purify,
    proden_update,
    records_adjust,
    records_debias,
    records_update,
    sinkhorn_assign,
)
from .zeroshot import FilterSpec, SizeStats, candidate_stats, filter_topk, zeroshot_confidence

__version__ = "0.1.0"

__all__ = [
    "AuxModel",
    "ConfigError",
    "CosineModel",
    "FeatureAdapter",
    "FilterSpec",
    "FormatError",
    "GenSpec",
    "LabelSpace",
    "LongTailSpec",
    "MetricBlock",
    "NumericalError",
    "NumericalWarning",
    "Objective",
    "ObjectiveState",
    "PLLDataset",
    "PLLError",
    "PLLWarning",
    "PartialLabelCosineClassifier",
    "RecordsState",
    "ShapeError",
    "SizeStats",
    "TrainConfig",
    "TrainReport",
    "ValidationReport",
    "accuracy",
    "candidate_stats",
    "covering_oracle",
    "evaluate_block",
    "filter_topk",
    "fit",
    "gen_fps",
    "gen_instance_dependent",
    "gen_uss",
    "generate_candidates",
    "load_model",
    "longtail_counts",
    "loss_abs_gce",
    "loss_abs_mae",
    "loss_cavl",
    "loss_cc",
    "loss_crd_feat",
    "loss_lws",
    "loss_weighted_ce",
    "parse_objective",
    "pop_purify",
    "proden_update",
    "read_candidates_file",
    "read_features_csv",
    "read_labels_file",
    "read_matrix_file",
    "records_adjust",
    "records_debias",
    "records_update",
    "save_model",
    "sgd_step",
    "shot_accuracy",
    "sinkhorn_assign",
    "subsample_longtail",
    "train_aux_classifier",
    "validate_dataset",
    "write_candidates_file",
    "write_labels_file",
    "write_matrix_file",
    "write_report",
    "zeroshot_confidence",
]
