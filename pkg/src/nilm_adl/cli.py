"""``nilm-adl`` command line: synthesize data, train/evaluate, disaggregate, analyse routines,
flag anomalies and export similarity layouts.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import io as fio
from .behaviour import (
    NOCTURNAL_INJECTIONS,
    DetectionEvent,
    RoutineProfile,
    build_routine,
    device_id,
    sankey_document,
    sankey_flows,
    simulate_routine,
    zscore_anomalies,
)
from .classify import evaluate_kfold, fit_classifier
from .classify.evaluation import format_table, metrics_csv
from .config import ConfigError, DataError, RunConfig, apply_overrides, load_config
from .layout import SimilarityGraph, device_similarity_graph, layout_json, layout_svg, multilevel_layout
from .preprocess import EventWindow, apply_minmax, fft_features, minmax_normalize, trace_features
from .signal_model import (
    DEFAULT_SIGNATURES,
    ApplianceLabel,
    compose_aggregate,
    routine_day_schedule,
    synth_dataset,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class InvariantError(RuntimeError):
    """An internal consistency check failed (exit code 3)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {path}: {exc.strerror}") from None
    return path


def _write(path: Path, text: str) -> None:
    try:
        fio.write_text(path, text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None


def _provenance(cfg: RunConfig) -> list[str]:
    return [f"config {cfg.hash}"]


def _json(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# -- commands -----------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> int:
    s, p = cfg.synth, cfg.preprocess
    out = _ensure_dir(Path(args.out))
    try:
        corpus = synth_dataset(
            s.homes, s.samples_per_home, p.window_len, cfg.seed,
            background_watts=s.background_watts, noise_sigma=s.noise_sigma,
            home_variance=s.home_variance, gap_s=s.gap_s, threshold_watts=p.threshold_watts,
        )
    except RuntimeError as exc:
        raise InvariantError(str(exc)) from None
    X = np.vstack([fft_features(EventWindow(w.start_t, w.readings), p.padded_len).magnitudes for w in corpus.windows])
    Xn, bounds = minmax_normalize(X)
    labels = np.array([int(w.label) for w in corpus.windows])
    starts = np.array([w.start_t for w in corpus.windows], dtype=np.int64)
    fio.write_corpus(out / "corpus.csv", fio.Corpus(labels, starts, Xn, bounds), _provenance(cfg), config_hash=cfg.hash)

    # one ordinary day with the nominal appliances, for disaggregation demos
    trace, truth = compose_aggregate(
        routine_day_schedule(cfg.seed, DEFAULT_SIGNATURES), 86_400,
        s.background_watts, s.day_noise_sigma, cfg.seed,
    )
    _write(out / "trace.csv", fio.format_trace(trace, _provenance(cfg)))
    _write(out / "truth.csv", fio.format_truth(truth, _provenance(cfg)))

    counts = corpus.counts()
    if sum(counts.values()) != len(corpus.windows):
        raise InvariantError("window tally does not match the corpus")
    per_label = ", ".join(f"{lab.display_name}={n}" for lab, n in counts.items())
    print(f"windows per label: {per_label}")
    print(f"total windows: {len(corpus.windows)}; readings per label: "
          f"{', '.join(f'{lab.display_name}={n * corpus.window_len}' for lab, n in counts.items())}; "
          f"total readings: {corpus.n_readings}")
    print(f"day trace: {len(trace)} readings, {len(truth)} activations")
    print(f"wrote {out}/corpus.csv, corpus.scaling.json, trace.csv, truth.csv")
    return EXIT_OK


def _combos(model: str, selector: str) -> list[tuple[str, str]]:
    models = ["forest", "svm"] if model == "all" else [model]
    selectors = ["flda", "sc"] if selector == "all" else [selector]
    return [(m, s) for s in selectors for m in models]


def cmd_train_eval(cfg: RunConfig, args) -> int:
    corpus = fio.read_corpus(args.corpus)
    if corpus.features.shape[1] != cfg.preprocess.n_features:
        raise DataError(
            f"corpus has {corpus.features.shape[1]} feature columns, config expects {cfg.preprocess.n_features}"
        )
    out = _ensure_dir(Path(args.out))
    combos = _combos(args.model, args.selector)
    grid = len(combos) > 1
    X, y = corpus.features, corpus.labels
    for model, selector in combos:
        spec = cfg.model_spec(model, selector)
        try:
            result = evaluate_kfold(X, y, spec, cfg.evaluation.folds, cfg.seed, args.jobs)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        clf = fit_classifier(X, y, spec, jobs=args.jobs, labels=np.unique(y))
        saved = fio.SavedModel(
            clf, corpus.bounds, cfg.preprocess.threshold_watts, cfg.preprocess.window_len,
            cfg.preprocess.padded_len, cfg.hash,
        )
        suffix = f"_{model}_{selector}" if grid else ""
        _write(out / f"metrics{suffix}.csv", metrics_csv(result, f"config {cfg.hash} model {model} selector {selector}"))
        _write(out / f"model{suffix}.json", fio.model_json(saved))
        print(format_table(result))
        print()
    return EXIT_OK


def cmd_disaggregate(cfg: RunConfig, args) -> int:
    saved = fio.read_model(args.model)
    p = cfg.preprocess
    if saved.n_features != p.n_features or saved.padded_len != p.padded_len:
        raise DataError(
            f"model expects {saved.n_features} features (padded_len {saved.padded_len}); "
            f"config gives {p.n_features} (padded_len {p.padded_len})"
        )
    if saved.window_len != p.window_len:
        raise DataError(f"model was trained on {saved.window_len}-reading windows, config uses {p.window_len}")
    trace = fio.read_trace(args.trace)
    vectors = trace_features(trace, p.threshold_watts, p.window_len, p.padded_len)
    events = []
    if vectors:
        X = apply_minmax(np.vstack([v.magnitudes for v in vectors]), saved.bounds)
        labels = saved.classifier.predict(X)
        conf = saved.classifier.confidence(X)
        for v, lab, c in zip(vectors, labels, conf):
            label = ApplianceLabel(int(lab))
            ts = trace.start_epoch + timedelta(seconds=int(v.source_start_t))
            events.append(DetectionEvent(ts, label, device_id(args.home, label), float(min(max(c, 0.0), 1.0))))
    _ensure_dir(Path(args.out).parent)
    _write(Path(args.out), fio.format_detections(events, _provenance(cfg)))
    print(f"{len(events)} detections written to {args.out}")
    for e in events:
        print(f"  {e.timestamp.isoformat()}  {e.label.display_name:<16} confidence {e.confidence:.3f}")
    return EXIT_OK


def _period(events) -> dict | None:
    if not events:
        return None
    ts = sorted(e.timestamp for e in events)
    return {"first": ts[0].isoformat(), "last": ts[-1].isoformat()}


def cmd_routine(cfg: RunConfig, args) -> int:
    events = fio.read_detections(args.detections)
    out = _ensure_dir(Path(args.out))
    profile = build_routine(events, cfg.behaviour.observation_windows())
    flows = sankey_flows(profile)
    if not (profile.total == len(events) == sum(f.weight for f in flows)):
        raise InvariantError("routine tallies do not conserve the detection count")
    doc = profile.to_dict()
    doc["config_hash"] = cfg.hash
    doc["period"] = _period(events)
    _write(out / "routine.json", _json(doc))
    sankey = sankey_document(flows)
    sankey["config_hash"] = cfg.hash
    _write(out / "sankey.json", _json(sankey))
    print(f"{len(events)} detections, {len(flows)} appliance-hour links")
    for label, st in sorted(profile.stats.items()):
        h, m = divmod(st.mean_minute, 60)
        print(f"  {label.display_name:<16} n={st.n:<5} mean {int(h):02d}:{int(m):02d}  sd {st.std_minutes:.1f} min")
    return EXIT_OK


def cmd_anomalies(cfg: RunConfig, args) -> int:
    events = fio.read_detections(args.detections)
    try:
        doc = json.loads(Path(args.baseline).read_text())
        baseline = RoutineProfile.from_dict(doc)
    except OSError as exc:
        raise DataError(f"cannot read {args.baseline}: {exc.strerror}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.baseline}: malformed baseline ({exc})") from None
    period = doc.get("period")
    if period and events:
        first, last = datetime.fromisoformat(period["first"]), datetime.fromisoformat(period["last"])
        if min(e.timestamp for e in events) <= last and max(e.timestamp for e in events) >= first:
            print("warning: detections overlap the baseline period", file=sys.stderr)
    threshold = cfg.behaviour.z_threshold if args.threshold is None else args.threshold
    if threshold < 0:
        raise ConfigError("threshold must be non-negative")
    report = zscore_anomalies(events, baseline, threshold)
    _ensure_dir(Path(args.out).parent)
    _write(Path(args.out), fio.format_anomalies(report, _provenance(cfg)))
    print(f"{len(report.flagged)} of {len(report.entries)} events flagged at |z| >= {threshold:g}")
    for e in report.flagged:
        print(f"  {e.event.timestamp.isoformat()}  {e.event.label.display_name:<16} z={e.z:.2f}")
    return EXIT_OK


def cmd_layout(cfg: RunConfig, args) -> int:
    corpus = fio.read_corpus(args.corpus)
    lay = cfg.layout
    out = _ensure_dir(Path(args.out))
    n = corpus.features.shape[0]
    if n == 0:
        raise DataError(f"{args.corpus}: corpus has no rows")
    ids = [f"w{i:04d}" for i in range(n)]
    labels = [ApplianceLabel(int(c)).slug for c in corpus.labels]
    if n == 1:
        graph = SimilarityGraph(tuple(ids), tuple(labels), sp.csr_matrix((1, 1)))
    else:
        graph = device_similarity_graph(corpus.features, labels, ids, lay.neighbours)
    res = multilevel_layout(
        graph.adjacency, lay.tol, lay.min_size, lay.ratio_p, cfg.seed,
        k=lay.spring_k, theta=lay.theta, max_iter=lay.max_iter,
    )
    if not np.all(np.isfinite(res.positions)):
        raise InvariantError("layout produced non-finite coordinates")
    _write(out / "layout.json", layout_json(graph, res.positions, config_hash=cfg.hash,
                                            converged=bool(res.converged), levels=[int(v) for v in res.levels]))
    if lay.svg:
        _write(out / "layout.svg", layout_svg(graph, res.positions))
    state = "converged" if res.converged else "iteration cap reached"
    print(f"{n} vertices, {len(graph.edges())} edges, levels {res.levels}: {state}")
    return EXIT_OK


def cmd_synth_routine(cfg: RunConfig, args) -> int:
    out = _ensure_dir(Path(args.out))
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(2)]
    start = datetime(2020, 1, 1, tzinfo=timezone.utc)
    baseline = simulate_routine(start, args.days, seeds[0], home=args.home)
    monitor_start = start + timedelta(days=args.days)
    injections = () if args.no_inject else NOCTURNAL_INJECTIONS
    if any(day >= args.days for day, _, _ in injections):
        raise ConfigError(f"--days {args.days} is too short for the injected events")
    monitor = simulate_routine(monitor_start, args.days, seeds[1], injections=injections, home=args.home)
    _write(out / "baseline_detections.csv", fio.format_detections(baseline, _provenance(cfg)))
    _write(out / "detections.csv", fio.format_detections(monitor, _provenance(cfg)))
    print(f"baseline: {len(baseline)} detections over {args.days} days from {start.date()}")
    print(f"monitor: {len(monitor)} detections over {args.days} days from {monitor_start.date()}, "
          f"{len(injections)} injected nocturnal events")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults when omitted)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    common.add_argument("--seed", type=int, help="override the config seed")

    parser = _Parser(prog="nilm-adl", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common], help="generate a labeled corpus and a demo day trace")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--homes", type=int, help="override synth.homes")
    p.add_argument("--samples", type=int, help="override synth.samples_per_home")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-eval", parents=[common], help="k-fold evaluation, then fit and save a model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", choices=["forest", "svm", "all"], default="forest")
    p.add_argument("--selector", choices=["flda", "sc", "none", "all"], default="flda")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for folds and trees")
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("disaggregate", parents=[common], help="detect and classify events in a trace")
    p.add_argument("--model", required=True, help="model.json from train-eval")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True, help="detections CSV path")
    p.add_argument("--home", default="home0", help="home identifier used in device ids")
    p.set_defaults(func=cmd_disaggregate)

    p = sub.add_parser("routine", parents=[common], help="observation-window routine and Sankey flows")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_routine)

    p = sub.add_parser("anomalies", parents=[common], help="score detections against a baseline routine")
    p.add_argument("--detections", required=True)
    p.add_argument("--baseline", required=True, help="routine.json built from an earlier period")
    p.add_argument("--out", required=True, help="anomalies CSV path")
    p.add_argument("--threshold", type=float, help="override behaviour.z_threshold")
    p.set_defaults(func=cmd_anomalies)

    p = sub.add_parser("layout", parents=[common], help="similarity-graph layout of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("synth-routine", parents=[common], help="simulated baseline and monitoring detections")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--days", type=int, default=182, help="length of each period")
    p.add_argument("--home", default="home0")
    p.add_argument("--no-inject", action="store_true", help="omit the nocturnal events")
    p.set_defaults(func=cmd_synth_routine)
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "homes", None) is not None:
        overrides.append(f"synth.homes={args.homes}")
    if getattr(args, "samples", None) is not None:
        overrides.append(f"synth.samples_per_home={args.samples}")
    return apply_overrides(cfg, overrides) if overrides else cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be >= 1")
        if getattr(args, "days", 1) < 1:
            raise ConfigError("--days must be >= 1")
        cfg = _resolve_config(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
