"""Trains classifiers on corrupted labels with the help of a small trusted set."""

from goldcorrect.corruption import (
    ProbMatrix,
    SuperclassPartition,
    corrupt_labels,
    make_flip,
    make_hierarchical,
    make_uniform,
    weak_classifier_labels,
)
from goldcorrect.data import (
    Dataset,
    TrustedSplit,
    generate_gaussian_blobs,
    load_csv,
    load_idx,
    split_trusted,
)
from goldcorrect.estimation import (
    ClassScores,
    estimate_confusion,
    estimate_forward,
    estimate_glc,
)
from goldcorrect.harness import ErrorCurve, SweepConfig, auec, run_sweep
from goldcorrect.model import MlpModel, ModelTemplate
from goldcorrect.optim import TrainConfig
from goldcorrect.report import render_report
from goldcorrect.training import MethodSpec, evaluate, run_method

__all__ = [
    "ClassScores",
    "Dataset",
    "ErrorCurve",
    "MethodSpec",
    "MlpModel",
    "ModelTemplate",
    "ProbMatrix",
    "SuperclassPartition",
    "SweepConfig",
    "TrainConfig",
    "TrustedSplit",
    "auec",
    "corrupt_labels",
    "estimate_confusion",
    "estimate_forward",
    "estimate_glc",
    "evaluate",
    "generate_gaussian_blobs",
    "load_csv",
    "load_idx",
    "make_flip",
    "make_hierarchical",
    "make_uniform",
    "render_report",
    "run_method",
    "run_sweep",
    "split_trusted",
    "weak_classifier_labels",
]
