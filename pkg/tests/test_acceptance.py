"""Numbered acceptance criteria; a pass/fail line per criterion is printed in the run summary."""

import hashlib
import json
import time
from datetime import datetime, timezone

import numpy as np
import pytest
import scipy.sparse as sp

from nilm_adl import io as fio
from nilm_adl.behaviour import (
    DEFAULT_WINDOWS,
    MINUTES_PER_DAY,
    DetectionEvent,
    build_routine,
    sankey_document,
    sankey_flows,
)
from nilm_adl.classify import auc_mann_whitney, evaluate_kfold
from nilm_adl.cli import main
from nilm_adl.config import RunConfig
from nilm_adl.features import scatter_matrices, spearman_rho_from_ranks
from nilm_adl.layout import (
    barnes_hut_repulsion,
    coarsen,
    exact_repulsion,
    force_directed,
    heavy_edge_matching,
    multilevel_layout,
)
from nilm_adl.preprocess import EventWindow, fft_features
from nilm_adl.signal_model import DEFAULT_SIGNATURES, ApplianceLabel, compose_aggregate


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance") / "data"
    assert main(["synth", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def corpus(data_dir):
    return fio.read_corpus(data_dir / "corpus.csv")


@pytest.fixture(scope="module")
def forest_model(data_dir):
    out = data_dir.parent / "model"
    assert main(["train-eval", "--corpus", str(data_dir / "corpus.csv"), "--out", str(out)]) == 0
    return out / "model.json"


@pytest.mark.acceptance(1, "dataset shape: 75 windows and 450 readings per class, 2250 total, < 1 s")
def test_dataset_shape(tmp_path, capsys):
    t0 = time.perf_counter()
    assert main(["synth", "--out", str(tmp_path)]) == 0
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    c = fio.read_corpus(tmp_path / "corpus.csv")
    counts = np.bincount(c.labels, minlength=5)
    assert counts.tolist() == [75] * 5
    assert (counts * 6).tolist() == [450] * 5
    assert int(counts.sum() * 6) == 2250
    assert "total readings: 2250" in out
    assert elapsed < 1.0, f"synth took {elapsed:.2f} s"


@pytest.mark.acceptance(2, "forest+FLDA k-fold AUC >= 0.90 for every label, < 30 s")
def test_forest_flda_auc(corpus):
    cfg = RunConfig()
    t0 = time.perf_counter()
    res = evaluate_kfold(corpus.features, corpus.labels, cfg.model_spec("forest", "flda"), 10, cfg.seed)
    elapsed = time.perf_counter() - t0
    aucs = [m.auc for m in res.metrics]
    assert len(aucs) == 5 and min(aucs) >= 0.90, aucs
    assert elapsed < 30.0


@pytest.mark.acceptance(3, "macro-AUC forest > SVM on the same corpus and folds")
@pytest.mark.parametrize("selector", ["flda", "sc"])
def test_forest_beats_svm(corpus, selector):
    cfg = RunConfig()
    X, y = corpus.features, corpus.labels
    forest = evaluate_kfold(X, y, cfg.model_spec("forest", selector), 10, cfg.seed)
    svm = evaluate_kfold(X, y, cfg.model_spec("svm", selector), 10, cfg.seed)
    np.testing.assert_array_equal(forest.folds, svm.folds)
    assert forest.macro["auc"] > svm.macro["auc"]


@pytest.mark.acceptance(4, "Mann-Whitney AUC equals ordered-pair counting on 1000 score sets")
def test_auc_oracle():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        n_pos = int(rng.integers(1, n))
        # coarse grid so ties occur often
        s = np.round(rng.random(n), int(rng.integers(1, 4)))
        pos, neg = s[:n_pos], s[n_pos:]
        gt = (pos[:, None] > neg[None, :]).sum()
        eq = (pos[:, None] == neg[None, :]).sum()
        oracle = (gt + 0.5 * eq) / (pos.size * neg.size)
        assert abs(auc_mann_whitney(pos, neg) - oracle) <= 1e-9


@pytest.mark.acceptance(5, "fft_features equals naive DFT on 1000 windows; Parseval to 1e-6")
def test_fft_oracle():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(2, 17))
        padded = 1 << (n - 1).bit_length()
        w = rng.uniform(0, 3000, n)
        x = np.zeros(padded)
        x[:n] = w
        k = np.arange(padded)
        naive = np.array([abs(np.sum(x * np.exp(-2j * np.pi * f * k / padded))) for f in range(padded)])
        mags = fft_features(EventWindow(0, w), padded).magnitudes
        np.testing.assert_allclose(mags, naive[: padded // 2 + 1], rtol=1e-9, atol=1e-9 * np.abs(w).sum())
        # Parseval over the full spectrum, rebuilt from the half spectrum of a real signal
        full = np.r_[mags, mags[1 : padded // 2][::-1]] if padded > 1 else mags
        assert abs(np.sum(full**2) / padded - np.sum(x * x)) <= 1e-6 * max(1.0, np.sum(x * x))


@pytest.mark.acceptance(6, "Spearman rho equals the direct formula on 1000 rank sequences; rho = 0.8 example")
def test_spearman_oracle():
    assert abs(spearman_rho_from_ranks([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]) - 0.8) <= 1e-12
    rng = np.random.default_rng(6)
    for _ in range(1000):
        n = int(rng.integers(2, 60))
        rx, ry = rng.permutation(n) + 1, rng.permutation(n) + 1
        d2 = sum((int(a) - int(b)) ** 2 for a, b in zip(rx, ry))
        assert abs(spearman_rho_from_ranks(rx, ry) - (1 - 6 * d2 / (n * (n * n - 1)))) <= 1e-12


@pytest.mark.acceptance(7, "scatter matrices equal brute-force sums; between-class zero for equal means")
def test_scatter_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n, d, c = int(rng.integers(4, 51)), int(rng.integers(1, 9)), int(rng.integers(2, 5))
        X = rng.normal(size=(n, d)) * 10
        y = np.arange(n) % c
        mu = [sum(X[i, j] for i in range(n)) / n for j in range(d)]
        SW = np.zeros((d, d))
        SB = np.zeros((d, d))
        for cls in range(c):
            rows = [i for i in range(n) if y[i] == cls]
            m = [sum(X[i, j] for i in rows) / len(rows) for j in range(d)]
            for a in range(d):
                for b in range(d):
                    SW[a, b] += sum((X[i, a] - m[a]) * (X[i, b] - m[b]) for i in rows)
                    SB[a, b] += (m[a] - mu[a]) * (m[b] - mu[b]) / c
        sm = scatter_matrices(X, y)
        assert np.abs(sm.within - SW).max() <= 1e-9 * max(1.0, np.abs(SW).max())
        assert np.abs(sm.between - SB).max() <= 1e-9 * max(1.0, np.abs(SB).max())
    X = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    assert np.all(scatter_matrices(X, np.array([0, 0, 1, 1])).between == 0)


@pytest.mark.acceptance(8, "six-month routine with 4 nocturnal injections flags exactly 4; uninjected flags 0; < 5 s")
def test_anomaly_scenario(tmp_path):
    t0 = time.perf_counter()
    for name, extra in (("inject", []), ("clean", ["--no-inject"])):
        d = tmp_path / name
        assert main(["synth-routine", "--out", str(d), *extra]) == 0
        assert main(["routine", "--detections", str(d / "baseline_detections.csv"), "--out", str(d / "base")]) == 0
        assert main(["anomalies", "--detections", str(d / "detections.csv"),
                     "--baseline", str(d / "base" / "routine.json"), "--out", str(d / "anomalies.csv")]) == 0
    elapsed = time.perf_counter() - t0
    flagged = [r for r in fio.read_anomaly_rows(tmp_path / "inject" / "anomalies.csv") if r[3]]
    assert len(flagged) == 4
    assert sorted(r[1] for r in flagged) == [ApplianceLabel.KETTLE] * 3 + [ApplianceLabel.TOASTER]
    assert all(r[0].hour < 5 for r in flagged)
    assert not any(r[3] for r in fio.read_anomaly_rows(tmp_path / "clean" / "anomalies.csv"))
    assert elapsed < 5.0, f"scenario took {elapsed:.2f} s"


@pytest.mark.acceptance(9, "Sankey sum = routine sum = detection count on 100 event sets; windows tile the day")
def test_conservation():
    cover = np.zeros(MINUTES_PER_DAY, dtype=int)
    for m in range(MINUTES_PER_DAY):
        cover[m] = sum(w.contains(m) for w in DEFAULT_WINDOWS)
    assert np.all(cover == 1)
    rng = np.random.default_rng(9)
    base = datetime(2020, 1, 1, tzinfo=timezone.utc).timestamp()
    for _ in range(100):
        n = int(rng.integers(0, 300))
        events = [
            DetectionEvent(datetime.fromtimestamp(base + float(s), timezone.utc), ApplianceLabel(int(lab)), "h")
            for s, lab in zip(rng.integers(0, 90 * 86400, n), rng.integers(0, 5, n))
        ]
        prof = build_routine(events)
        flows = sankey_flows(prof)
        links = sankey_document(flows)["links"]
        assert sum(l["value"] for l in links) == sum(f.weight for f in flows) == prof.total == len(events)


@pytest.mark.acceptance(10, "layout: unit pair equilibrium, exact theta=0 tree, clique separation, triple product")
def test_layout_suite():
    pair = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    x, ok, _ = force_directed(pair, np.array([[0.0, 0.0], [2.5, 1.0]]), k=1.0, tol=1e-6, theta=0.0, max_iter=2000)
    assert ok and abs(np.linalg.norm(x[0] - x[1]) - 1.0) <= 1e-3

    rng = np.random.default_rng(10)
    for n in (2, 3, 17, 64, 200):
        pts = rng.normal(size=(n, 2)) * 7
        exact = exact_repulsion(pts, 1.0)
        assert np.abs(barnes_hut_repulsion(pts, 1.0, theta=0.0) - exact).max() <= 1e-9 * max(1.0, np.abs(exact).max())

    m = 8
    A = np.zeros((2 * m, 2 * m))
    A[:m, :m] = A[m:, m:] = 1
    np.fill_diagonal(A, 0)
    A[m - 1, m] = A[m, m - 1] = 0.05
    for seed in range(20):
        pos = multilevel_layout(sp.csr_matrix(A), seed=seed).positions
        a, b = pos[:m], pos[m:]
        spread = max(np.linalg.norm(a - a.mean(0), axis=1).max(), np.linalg.norm(b - b.mean(0), axis=1).max())
        assert np.linalg.norm(a.mean(0) - b.mean(0)) > 2 * spread

    for seed in range(50):
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 40))
        W = np.triu(r.random((n, n)) < r.uniform(0.05, 0.6), 1) * r.uniform(0.1, 3, (n, n))
        W = W + W.T
        coarse, _ = coarsen(sp.csr_matrix(W))
        parent = heavy_edge_matching(sp.csr_matrix(W))
        P = np.zeros((n, parent.max() + 1))
        P[np.arange(n), parent] = 1
        assert np.abs(coarse.toarray() - P.T @ W @ P).max() <= 1e-12


def _digests(directory):
    return {
        str(p.relative_to(directory)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(directory.rglob("*")) if p.is_file()
    }


def _run_all(root, jobs):
    data, model, grid = root / "data", root / "model", root / "grid"
    routine = root / "routine"
    steps = [
        ["synth", "--out", str(data)],
        ["train-eval", "--corpus", str(data / "corpus.csv"), "--out", str(model), "--jobs", jobs],
        ["train-eval", "--corpus", str(data / "corpus.csv"), "--out", str(grid), "--model", "all",
         "--selector", "all", "--jobs", jobs],
        ["disaggregate", "--model", str(model / "model.json"), "--trace", str(data / "trace.csv"),
         "--out", str(root / "detections.csv")],
        ["synth-routine", "--out", str(routine)],
        ["routine", "--detections", str(routine / "baseline_detections.csv"), "--out", str(routine / "base")],
        ["anomalies", "--detections", str(routine / "detections.csv"), "--baseline",
         str(routine / "base" / "routine.json"), "--out", str(routine / "anomalies.csv")],
        ["layout", "--corpus", str(data / "corpus.csv"), "--out", str(root / "layout")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return _digests(root)


@pytest.mark.acceptance(11, "every CLI command is byte-identical on rerun, including --jobs 4")
def test_determinism(tmp_path):
    first = _run_all(tmp_path / "a", "1")
    second = _run_all(tmp_path / "b", "4")
    assert len(first) >= 20
    assert first == second


@pytest.mark.acceptance(12, "noise-free single-kettle day: one detection, kettle, onset within one sample")
def test_single_kettle_day(forest_model, tmp_path):
    onset = 7 * 3600 + 23 * 60 + 40
    trace, truth = compose_aggregate([(DEFAULT_SIGNATURES[ApplianceLabel.KETTLE], onset)], 86_400, 80.0, 0.0, 0)
    fio.write_text(tmp_path / "trace.csv", fio.format_trace(trace))
    assert main(["disaggregate", "--model", str(forest_model), "--trace", str(tmp_path / "trace.csv"),
                 "--out", str(tmp_path / "det.csv")]) == 0
    det = fio.read_detections(tmp_path / "det.csv")
    assert len(det) == 1
    assert det[0].label is ApplianceLabel.KETTLE
    t = (det[0].timestamp - trace.start_epoch).total_seconds()
    assert abs(t - truth.entries[0].start_t) <= 10
