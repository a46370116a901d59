"""Feature-selection + classifier pipelines and stratified k-fold evaluation."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..features import score_features, select_top_k
from ..signal_model import ApplianceLabel
from .forest import DecisionForestModel, ForestParams, train_forest
from .metrics import ClassMetrics, class_metrics, macro_average
from .svm import Kernel, SvmOvaModel, train_svm_ova

MODELS = ("forest", "svm")
SELECTORS = ("flda", "sc", "none")


@dataclass(frozen=True)
class ModelSpec:
    model: str = "forest"
    selector: str = "flda"
    top_k: int = 3
    forest: ForestParams = field(default_factory=ForestParams)
    kernel: Kernel = field(default_factory=Kernel)
    C: float = 1.0
    svm_tol: float = 1e-3

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class FittedClassifier:
    spec: ModelSpec
    selected: list[int]
    model: DecisionForestModel | SvmOvaModel

    @property
    def classes(self) -> np.ndarray:
        return self.model.classes

    def scores(self, X) -> np.ndarray:
        """Per-class score columns: forest probabilities or SVM decision values."""
        Xs = np.atleast_2d(np.asarray(X, dtype=float))[:, self.selected]
        if isinstance(self.model, DecisionForestModel):
            return self.model.predict_proba(Xs)
        return self.model.decision_values(Xs)

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.scores(X), axis=1)]

    def confidence(self, X) -> np.ndarray:
        """Score of the winning class mapped into [0, 1]."""
        Xs = np.atleast_2d(np.asarray(X, dtype=float))[:, self.selected]
        if isinstance(self.model, DecisionForestModel):
            p = self.model.predict_proba(Xs)
        else:
            p = self.model.confidence(Xs)
        return p.max(axis=1)


def fit_classifier(X, y, spec: ModelSpec, jobs: int = 1, labels=None) -> FittedClassifier:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if spec.selector == "none":
        selected = list(range(X.shape[1]))
    else:
        k = min(spec.top_k, X.shape[1])
        selected = select_top_k(score_features(X, y, spec.selector), k)
    Xs = X[:, selected]
    if spec.model == "forest":
        model = train_forest(Xs, y, spec.forest, jobs=jobs)
    else:
        model = train_svm_ova(Xs, y, spec.kernel, spec.C, spec.svm_tol, labels=labels)
    return FittedClassifier(spec, selected, model)


def stratified_folds(y, k: int, seed: int = 0) -> np.ndarray:
    """Fold index for every row; each class is dealt round-robin after a seeded shuffle."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    short = [(c, n) for c, n in zip(classes, counts) if n < k]
    if short:
        detail = ", ".join(f"{c} has {n}" for c, n in short)
        raise ValueError(f"every class needs at least k={k} samples ({detail})")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.nonzero(y == c)[0]) for c in classes])
    fold = np.empty(y.size, dtype=int)
    fold[order] = np.arange(order.size) % k
    return fold


@dataclass
class KFoldResult:
    spec: ModelSpec
    classes: np.ndarray
    metrics: list[ClassMetrics]
    macro: dict[str, float]
    y_true: np.ndarray
    y_pred: np.ndarray
    scores: np.ndarray
    folds: np.ndarray


def _run_fold(args):
    X, y, folds, f, spec, classes = args
    train, test = folds != f, folds == f
    clf = fit_classifier(X[train], y[train], spec, labels=classes)
    return f, np.nonzero(test)[0], clf.scores(X[test]), clf.predict(X[test])


def evaluate_kfold(X, y, spec: ModelSpec = ModelSpec(), k: int = 10, seed: int = 0, jobs: int = 1) -> KFoldResult:
    """Held-out scores pooled over all folds, then scored per label one-vs-rest."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    folds = stratified_folds(y, k, seed)
    classes = np.unique(y)
    scores = np.zeros((y.size, classes.size))
    pred = np.empty_like(y)
    tasks = [(X, y, folds, f, spec, classes) for f in range(k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    for _, idx, s, p in results:
        scores[idx] = s
        pred[idx] = p
    metrics = class_metrics(y, pred, scores, classes)
    return KFoldResult(spec, classes, metrics, macro_average(metrics), y, pred, scores, folds)


def metrics_csv(result: KFoldResult, header_comment: str | None = None) -> str:
    """``device,sensitivity,specificity,auc`` in percent with two decimals."""
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append("device,sensitivity,specificity,auc")
    for m in result.metrics:
        name = ApplianceLabel(m.label).display_name
        lines.append(f"{name},{100 * m.sensitivity:.2f},{100 * m.specificity:.2f},{100 * m.auc:.2f}")
    return "\n".join(lines) + "\n"


_TITLES = {
    ("forest", "flda"): "DECISION FOREST USING FLDA",
    ("svm", "flda"): "SVM USING FLDA",
    ("forest", "sc"): "DECISION FOREST USING SC",
    ("svm", "sc"): "SVM USING SC",
}


def format_table(result: KFoldResult) -> str:
    title = _TITLES.get((result.spec.model, result.spec.selector), f"{result.spec.model} / {result.spec.selector}")
    rows = [title, f"{'Device':<16}{'Sensitivity':>12}{'Specificity':>12}{'AUC':>8}"]
    for m in result.metrics:
        rows.append(
            f"{ApplianceLabel(m.label).display_name:<16}{100 * m.sensitivity:>12.2f}"
            f"{100 * m.specificity:>12.2f}{100 * m.auc:>8.2f}"
        )
    mac = result.macro
    rows.append(f"{'(macro)':<16}{100 * mac['sensitivity']:>12.2f}{100 * mac['specificity']:>12.2f}{100 * mac['auc']:>8.2f}")
    return "\n".join(rows)


def compare_configurations(
    X, y, base: ModelSpec = ModelSpec(), k: int = 10, seed: int = 0, jobs: int = 1
) -> dict[tuple[str, str], KFoldResult]:
    """The {forest, svm} x {flda, sc} grid, all on the same folds."""
    out = {}
    for selector in ("flda", "sc"):
        for model in ("forest", "svm"):
            spec = replace(base, model=model, selector=selector)
            out[(model, selector)] = evaluate_kfold(X, y, spec, k, seed, jobs)
    return out
