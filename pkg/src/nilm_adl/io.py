"""CSV / JSON readers and writers for traces, corpora, models, detections and anomalies.

Every text file is ASCII with LF line endings. CSV files may open with ``#``
comment lines (provenance such as the config hash); readers skip them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .behaviour import AnomalyReport, DetectionEvent
from .classify import (
    DecisionForestModel,
    FittedClassifier,
    ForestParams,
    Kernel,
    ModelSpec,
    SvmOvaModel,
)
from .classify.forest import LEAF, Tree
from .classify.svm import BinaryMachine
from .config import DataError
from .signal_model import Activation, AggregateTrace, ApplianceLabel, GroundTruthLog, SAMPLE_INTERVAL_S

MODEL_FORMAT = "nilm-adl-model"
MODEL_VERSION = 1


def write_text(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def _comments(comments) -> list[str]:
    return [f"# {c}" for c in comments or ()]


def _read_rows(path: str | Path, header: list[str]) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """(comment lines, [(line number, fields)]) after checking the header row."""
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path}: file is not ASCII") from None
    comments, rows, seen_header = [], [], False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        fields = next(csv.reader([line]))
        if not seen_header:
            open_ended = header[-1] == "*"
            fixed = header[:-1] if open_ended else header
            if fields[: len(fixed)] != fixed or (not open_ended and len(fields) != len(fixed)):
                raise DataError(f"{path}: line {lineno}: expected header {','.join(header)}")
            seen_header = True
            continue
        rows.append((lineno, fields))
    if not seen_header:
        raise DataError(f"{path}: missing header {','.join(header)}")
    return comments, rows


def _header_fields(path) -> list[str]:
    for line in Path(path).read_text(encoding="ascii").splitlines():
        if line.strip() and not line.startswith("#"):
            return next(csv.reader([line]))
    return []


def _num(path, lineno, text, kind=float):
    try:
        v = kind(text)
    except ValueError:
        raise DataError(f"{path}: line {lineno}: {text!r} is not a valid number") from None
    if kind is float and not math.isfinite(v):
        raise DataError(f"{path}: line {lineno}: non-finite value {text!r}")
    return v


def _label(path, lineno, text) -> ApplianceLabel:
    try:
        return ApplianceLabel.parse(text)
    except ValueError:
        raise DataError(f"{path}: line {lineno}: unknown appliance label {text!r}") from None


# -- traces -----------------------------------------------------------------


def format_trace(trace: AggregateTrace, comments=()) -> str:
    lines = _comments(comments)
    lines.append(f"# start_epoch {trace.start_epoch.isoformat()}")
    lines.append("t_seconds,watts")
    lines += [f"{t},{w:.3f}" for t, w in zip(trace.times.tolist(), trace.watts.tolist())]
    return "\n".join(lines) + "\n"


def read_trace(path: str | Path) -> AggregateTrace:
    comments, rows = _read_rows(path, ["t_seconds", "watts"])
    start = datetime(2020, 1, 1, tzinfo=timezone.utc)
    for c in comments:
        if c.startswith("start_epoch "):
            start = _parse_time(path, 0, c.split(" ", 1)[1])
    watts = np.empty(len(rows))
    for i, (lineno, (t, w)) in enumerate(rows):
        if _num(path, lineno, t, int) != i * SAMPLE_INTERVAL_S:
            raise DataError(f"{path}: line {lineno}: expected t_seconds={i * SAMPLE_INTERVAL_S}")
        watts[i] = _num(path, lineno, w)
        if watts[i] < 0:
            raise DataError(f"{path}: line {lineno}: negative power reading")
    return AggregateTrace(watts, start)


def format_truth(truth: GroundTruthLog, comments=()) -> str:
    lines = _comments(comments) + ["label,start_t,end_t"]
    lines += [f"{a.label.slug},{a.start_t},{a.end_t}" for a in truth]
    return "\n".join(lines) + "\n"


def read_truth(path: str | Path) -> GroundTruthLog:
    _, rows = _read_rows(path, ["label", "start_t", "end_t"])
    entries = [
        Activation(_label(path, n, lab), _num(path, n, s, int), _num(path, n, e, int))
        for n, (lab, s, e) in rows
    ]
    try:
        return GroundTruthLog(tuple(entries))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


# -- feature corpus -----------------------------------------------------------


@dataclass
class Corpus:
    labels: np.ndarray  # label codes
    source_start_t: np.ndarray
    features: np.ndarray  # normalized, (n, d)
    bounds: np.ndarray  # (d, 2) per-column (min, max) used for the normalization


def sidecar_path(corpus_path: str | Path) -> Path:
    p = Path(corpus_path)
    return p.with_name(p.stem + ".scaling.json")


def format_corpus(corpus: Corpus, comments=()) -> str:
    d = corpus.features.shape[1]
    lines = _comments(comments) + ["label,source_start_t," + ",".join(f"m{j}" for j in range(d))]
    for lab, t, row in zip(corpus.labels.tolist(), corpus.source_start_t.tolist(), corpus.features.tolist()):
        lines.append(f"{ApplianceLabel(lab).slug},{t}," + ",".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"


def format_scaling(bounds: np.ndarray, **extra) -> str:
    doc = dict(extra)
    doc["columns"] = [{"name": f"m{j}", "min": float(lo), "max": float(hi)} for j, (lo, hi) in enumerate(bounds)]
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_corpus(path: str | Path, corpus: Corpus, comments=(), **extra) -> None:
    write_text(path, format_corpus(corpus, comments))
    write_text(sidecar_path(path), format_scaling(corpus.bounds, **extra))


def read_corpus(path: str | Path) -> Corpus:
    _, rows = _read_rows(path, ["label", "source_start_t", "*"])
    header = _header_fields(path)
    side = sidecar_path(path)
    try:
        doc = json.loads(side.read_text())
        bounds = np.array([[c["min"], c["max"]] for c in doc["columns"]], dtype=float).reshape(-1, 2)
    except OSError:
        raise DataError(f"missing scaling sidecar {side}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        raise DataError(f"{side}: malformed scaling sidecar") from None
    d = bounds.shape[0]
    if header[2:] != [f"m{j}" for j in range(d)]:
        raise DataError(f"{path}: feature columns must be m0..m{d - 1} to match {side.name}")
    labels, starts, feats = [], [], []
    for lineno, fields in rows:
        if len(fields) != d + 2:
            raise DataError(f"{path}: line {lineno}: expected {d + 2} fields, got {len(fields)}")
        labels.append(int(_label(path, lineno, fields[0])))
        starts.append(_num(path, lineno, fields[1], int))
        feats.append([_num(path, lineno, v) for v in fields[2:]])
    X = np.array(feats, dtype=float).reshape(len(feats), d)
    return Corpus(np.array(labels, dtype=int), np.array(starts, dtype=np.int64), X, bounds)


# -- detections and anomalies -------------------------------------------------


def _parse_time(path, lineno, text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise DataError(f"{path}: line {lineno}: {text!r} is not an ISO-8601 timestamp") from None
    return ts


def format_detections(events, comments=()) -> str:
    lines = _comments(comments) + ["timestamp_iso8601,label,device_id,confidence"]
    lines += [f"{e.timestamp.isoformat()},{e.label.slug},{e.device_id},{e.confidence:.6f}" for e in events]
    return "\n".join(lines) + "\n"


def read_detections(path: str | Path) -> list[DetectionEvent]:
    _, rows = _read_rows(path, ["timestamp_iso8601", "label", "device_id", "confidence"])
    out = []
    for lineno, (ts, lab, dev, conf) in rows:
        c = _num(path, lineno, conf)
        if not 0 <= c <= 1:
            raise DataError(f"{path}: line {lineno}: confidence {c} outside [0, 1]")
        out.append(DetectionEvent(_parse_time(path, lineno, ts), _label(path, lineno, lab), dev, c))
    return out


def format_anomalies(report: AnomalyReport, comments=()) -> str:
    lines = _comments(comments) + [f"# threshold {report.threshold!r}", "timestamp,label,z,flagged"]
    for e in report.entries:
        z = "" if e.z is None else ("inf" if math.isinf(e.z) else f"{e.z:.4f}")
        lines.append(f"{e.event.timestamp.isoformat()},{e.event.label.slug},{z},{str(e.flagged).lower()}")
    return "\n".join(lines) + "\n"


def read_anomaly_rows(path: str | Path) -> list[tuple[datetime, ApplianceLabel, float | None, bool]]:
    _, rows = _read_rows(path, ["timestamp", "label", "z", "flagged"])
    out = []
    for lineno, (ts, lab, z, flagged) in rows:
        if flagged not in ("true", "false"):
            raise DataError(f"{path}: line {lineno}: flagged must be true or false")
        zv = None if z == "" else (math.inf if z == "inf" else _num(path, lineno, z))
        out.append((_parse_time(path, lineno, ts), _label(path, lineno, lab), zv, flagged == "true"))
    return out


# -- models -------------------------------------------------------------------


def _tree_to_nodes(tree: Tree, i: int = 0) -> dict:
    if tree.feature[i] == LEAF:
        return {"counts": tree.counts[i].tolist()}
    return {
        "feature": int(tree.feature[i]),
        "threshold": float(tree.threshold[i]),
        "left": _tree_to_nodes(tree, int(tree.left[i])),
        "right": _tree_to_nodes(tree, int(tree.right[i])),
    }


def _tree_from_nodes(root: dict, n_classes: int) -> Tree:
    feature, threshold, left, right, counts = [], [], [], [], []

    def visit(node: dict) -> int:
        i = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(np.zeros(n_classes))
        if "counts" in node:
            c = np.asarray(node["counts"], dtype=float)
            if c.shape != (n_classes,):
                raise ValueError("leaf histogram has the wrong length")
            counts[i] = c
            return i
        feature[i] = int(node["feature"])
        threshold[i] = float(node["threshold"])
        left[i] = visit(node["left"])
        right[i] = visit(node["right"])
        return i

    visit(root)
    return Tree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(counts, dtype=float).reshape(len(counts), n_classes),
    )


@dataclass
class SavedModel:
    """A fitted classifier plus the preprocessing it expects."""

    classifier: FittedClassifier
    bounds: np.ndarray
    threshold_watts: float
    window_len: int
    padded_len: int
    config_hash: str = ""

    @property
    def n_features(self) -> int:
        return self.bounds.shape[0]


def model_document(saved: SavedModel) -> dict:
    clf = saved.classifier
    spec = clf.spec
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config_hash": saved.config_hash,
        "preprocess": {
            "threshold_watts": saved.threshold_watts,
            "window_len": saved.window_len,
            "padded_len": saved.padded_len,
        },
        "scaling": saved.bounds.tolist(),
        "spec": {
            "model": spec.model,
            "selector": spec.selector,
            "top_k": spec.top_k,
            "C": spec.C,
            "svm_tol": spec.svm_tol,
            "kernel": {"kind": spec.kernel.kind, "degree": spec.kernel.degree,
                       "gamma": spec.kernel.gamma, "coef0": spec.kernel.coef0},
            "forest": {"num_trees": spec.forest.num_trees, "max_internal_nodes": spec.forest.max_internal_nodes,
                       "min_samples_leaf": spec.forest.min_samples_leaf, "bag_fraction": spec.forest.bag_fraction,
                       "max_features": spec.forest.max_features, "seed": spec.forest.seed},
        },
        "selected": [int(j) for j in clf.selected],
        "classes": [int(c) for c in clf.classes],
    }
    m = clf.model
    if isinstance(m, DecisionForestModel):
        doc["forest"] = {"n_features": m.n_features, "trees": [_tree_to_nodes(t) for t in m.trees]}
    else:
        doc["svm"] = {
            "n_features": m.n_features,
            "machines": [
                {
                    "bias": float(mc.bias),
                    "C": float(mc.C),
                    "dual_coef": mc.dual_coef.tolist(),
                    "support_vectors": mc.support_vectors.tolist(),
                    "kkt_residual": float(mc.kkt_residual),
                    "iterations": int(mc.iterations),
                    "converged": bool(mc.converged),
                }
                for mc in m.machines
            ],
        }
    return doc


def model_json(saved: SavedModel) -> str:
    return json.dumps(model_document(saved), indent=1, sort_keys=True) + "\n"


def model_from_document(doc: dict) -> SavedModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise DataError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {doc.get('version')!r}")
    try:
        s = doc["spec"]
        kernel = Kernel(**s["kernel"])
        spec = ModelSpec(
            model=s["model"], selector=s["selector"], top_k=s["top_k"],
            forest=ForestParams(**s["forest"]), kernel=kernel, C=s["C"], svm_tol=s["svm_tol"],
        )
        classes = np.array(doc["classes"], dtype=int)
        if "forest" in doc:
            f = doc["forest"]
            model = DecisionForestModel(
                classes, int(f["n_features"]), [_tree_from_nodes(t, classes.size) for t in f["trees"]]
            )
        else:
            sv = doc["svm"]
            d = int(sv["n_features"])
            machines = [
                BinaryMachine(
                    np.array(mc["support_vectors"], dtype=float).reshape(-1, d),
                    np.array(mc["dual_coef"], dtype=float),
                    float(mc["bias"]), kernel, float(mc["C"]), float(mc["kkt_residual"]),
                    int(mc["iterations"]), bool(mc["converged"]),
                )
                for mc in sv["machines"]
            ]
            model = SvmOvaModel(classes, d, machines)
        pre = doc["preprocess"]
        saved = SavedModel(
            FittedClassifier(spec, [int(j) for j in doc["selected"]], model),
            np.array(doc["scaling"], dtype=float).reshape(-1, 2),
            float(pre["threshold_watts"]), int(pre["window_len"]), int(pre["padded_len"]),
            str(doc.get("config_hash", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file: {exc}") from None
    if len(saved.classifier.selected) != model.n_features or max(saved.classifier.selected, default=0) >= saved.n_features:
        raise DataError("model feature selection does not match its scaling")
    return saved


def read_model(path: str | Path) -> SavedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    return model_from_document(doc)
