import itertools

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given
from hypothesis import strategies as st

from nilm_adl.classify import (
    ForestParams,
    Kernel,
    ModelSpec,
    auc_mann_whitney,
    auc_score,
    auc_trapezoid,
    evaluate_kfold,
    fit_classifier,
    predict_forest,
    smo_train,
    stratified_folds,
    train_forest,
    train_svm_ova,
)
from nilm_adl.classify.evaluation import format_table, metrics_csv
from nilm_adl.classify.metrics import ClassMetrics, sensitivity_specificity


def blobs(seed=0, n=30, sep=3.0, d=3, k=3):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c * sep, 1.0, (n, d)) for c in range(k)])
    return X, np.repeat(np.arange(k), n)


# -- metrics --------------------------------------------------------------------


def pair_count_auc(pos, neg):
    return sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg) / (len(pos) * len(neg))


def test_frozen_auc_with_tie():
    assert auc_mann_whitney([0.9, 0.8, 0.4], [0.7, 0.4, 0.1]) == pytest.approx(0.8333333333333334, abs=1e-12)


@given(st.lists(st.integers(0, 8), min_size=1, max_size=40), st.lists(st.integers(0, 8), min_size=1, max_size=40))
def test_auc_matches_pair_count(pos, neg):
    a = auc_mann_whitney(pos, neg)
    assert a == pytest.approx(pair_count_auc(pos, neg), abs=1e-12)
    labels = np.r_[np.ones(len(pos), bool), np.zeros(len(neg), bool)]
    assert auc_trapezoid(labels, np.r_[pos, neg]) == pytest.approx(a, abs=1e-12)


def test_auc_degenerate_and_flip():
    assert np.isnan(auc_mann_whitney([], [1.0]))
    s = np.array([0.1, 0.4, 0.35, 0.8])
    lab = np.array([0, 0, 1, 1], bool)
    assert auc_score(lab, s) + auc_score(lab, -s) == pytest.approx(1.0)


def test_sensitivity_specificity_by_hand():
    y = np.array([0, 0, 1, 1, 1, 2])
    p = np.array([0, 1, 1, 1, 0, 2])
    assert sensitivity_specificity(y, p, 1) == pytest.approx((2 / 3, 2 / 3))
    assert sensitivity_specificity(y, p, 0) == pytest.approx((0.5, 0.75))
    with pytest.raises(ValueError):
        ClassMetrics(0, 1.2, 0.5, 0.5)


def test_stratified_folds_balanced_and_seeded():
    y = np.repeat(np.arange(5), 75)
    f = stratified_folds(y, 10, seed=4)
    for c in range(5):
        counts = np.bincount(f[y == c], minlength=10)
        assert counts.max() - counts.min() <= 1
    np.testing.assert_array_equal(f, stratified_folds(y, 10, seed=4))
    with pytest.raises(ValueError, match="at least k=10"):
        stratified_folds(np.r_[y, 7], 10)


# -- forest ---------------------------------------------------------------------


def test_forest_fits_separable_data():
    X, y = blobs()
    model = train_forest(X, y, ForestParams(num_trees=8, seed=1))
    assert np.mean(model.predict(X) == y) == 1.0
    p = predict_forest(model, X)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert predict_forest(model, X[0]).shape == (3,)


def test_forest_respects_node_budget_and_seed():
    X, y = blobs(sep=0.5)
    params = ForestParams(num_trees=4, max_internal_nodes=5, seed=2)
    a = train_forest(X, y, params)
    b = train_forest(X, y, params)
    assert all(t.n_internal <= 5 for t in a.trees)
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.feature, tb.feature)
        np.testing.assert_array_equal(ta.threshold, tb.threshold)


def test_forest_parallel_matches_serial():
    X, y = blobs(sep=1.0)
    params = ForestParams(num_trees=6, seed=5)
    np.testing.assert_array_equal(
        train_forest(X, y, params, jobs=3).predict_proba(X), train_forest(X, y, params).predict_proba(X)
    )


def test_forest_tie_goes_to_lower_label():
    X = np.zeros((4, 1))
    y = np.array([3, 1, 3, 1])
    model = train_forest(X, y, ForestParams(num_trees=1, bag_fraction=1.0, seed=0))
    hist = model.tree_histograms(X)[0, 0]
    if hist[0] == hist[1]:
        assert model.predict(X[:1])[0] == 1


def test_forest_dimension_check():
    X, y = blobs()
    model = train_forest(X, y, ForestParams(num_trees=2))
    with pytest.raises(ValueError):
        model.predict(np.ones((1, 5)))


# -- svm ------------------------------------------------------------------------


def dual_oracle(X, y, kernel, C):
    """Independent dual solve with a general-purpose constrained optimizer."""
    K = kernel(X, X)
    Q = (y[:, None] * y[None, :]) * K
    n = len(y)
    res = scipy.optimize.minimize(
        lambda a: 0.5 * a @ Q @ a - a.sum(),
        np.zeros(n),
        jac=lambda a: Q @ a - 1.0,
        bounds=[(0, C)] * n,
        constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 1000},
    )
    return res.fun


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kernel", [Kernel(), Kernel("linear")])
def test_smo_reaches_dual_optimum_and_kkt(seed, kernel):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 0] + 0.5 * X[:, 1] ** 2 + 0.3 * rng.normal(size=30) > 0, 1.0, -1.0)
    m = smo_train(X, y, kernel, C=1.0, tol=1e-6)
    assert m.converged
    alpha = np.zeros(30)
    idx = [int(np.nonzero((X == sv).all(axis=1))[0][0]) for sv in m.support_vectors]
    alpha[idx] = m.dual_coef * y[idx]
    assert np.all(alpha >= -1e-12) and np.all(alpha <= 1 + 1e-12)
    assert abs(alpha @ y) < 1e-9
    K = kernel(X, X)
    Q = (y[:, None] * y[None, :]) * K
    ours = 0.5 * alpha @ Q @ alpha - alpha.sum()
    assert ours <= dual_oracle(X, y, kernel, 1.0) + 1e-5
    # complementary slackness with the learned bias
    margin = y * m.decision_function(X)
    free = (alpha > 1e-8) & (alpha < 1 - 1e-8)
    np.testing.assert_allclose(margin[free], 1.0, atol=1e-4)
    assert np.all(margin[alpha < 1e-8] >= 1 - 1e-4)


def test_smo_rejects_bad_targets():
    with pytest.raises(ValueError):
        smo_train(np.ones((2, 1)), np.array([0.0, 1.0]))


def test_ova_predicts_blobs_and_checks_labels():
    X, y = blobs(sep=4.0)
    model = train_svm_ova(X / 10, y)
    assert np.mean(model.predict(X / 10) == y) > 0.95
    np.testing.assert_allclose(model.confidence(X[:3] / 10).sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        train_svm_ova(X, y, labels=[0, 1, 2, 3])


# -- evaluation -----------------------------------------------------------------


def test_selection_uses_training_rows_only():
    X, y = blobs(n=20)
    clf = fit_classifier(X, y, ModelSpec(selector="flda", top_k=2, forest=ForestParams(num_trees=4)))
    assert len(clf.selected) == 2
    assert clf.scores(X).shape == (60, 3)
    assert np.all((clf.confidence(X) >= 0) & (clf.confidence(X) <= 1))


def test_kfold_pipeline_and_reports():
    X, y = blobs(n=20, sep=2.0)
    res = evaluate_kfold(X, y, ModelSpec(forest=ForestParams(num_trees=8)), k=5, seed=0)
    assert len(res.metrics) == 3
    assert all(m.auc > 0.9 for m in res.metrics)
    csv = metrics_csv(res, "config abc")
    lines = csv.splitlines()
    assert lines[0] == "# config abc" and lines[1] == "device,sensitivity,specificity,auc"
    assert lines[2].startswith("Kettle,") and len(lines[2].split(",")[1].split(".")[1]) == 2
    assert format_table(res).splitlines()[0] == "DECISION FOREST USING FLDA"
    again = evaluate_kfold(X, y, ModelSpec(forest=ForestParams(num_trees=8)), k=5, seed=0, jobs=2)
    np.testing.assert_array_equal(res.scores, again.scores)


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(model="knn")
    with pytest.raises(ValueError):
        ModelSpec(selector="pca")
