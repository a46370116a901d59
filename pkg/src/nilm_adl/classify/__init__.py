from .evaluation import (
    FittedClassifier,
    KFoldResult,
    ModelSpec,
    compare_configurations,
    evaluate_kfold,
    fit_classifier,
    stratified_folds,
)
from .forest import DecisionForestModel, ForestParams, predict_forest, train_forest
from .metrics import ClassMetrics, auc_mann_whitney, auc_score, auc_trapezoid
from .svm import Kernel, SvmOvaModel, smo_train, train_svm_ova

__all__ = [
    "ClassMetrics",
    "DecisionForestModel",
    "FittedClassifier",
    "ForestParams",
    "KFoldResult",
    "Kernel",
    "ModelSpec",
    "SvmOvaModel",
    "auc_mann_whitney",
    "auc_score",
    "auc_trapezoid",
    "compare_configurations",
    "evaluate_kfold",
    "fit_classifier",
    "predict_forest",
    "smo_train",
    "stratified_folds",
    "train_forest",
    "train_svm_ova",
]
