"""Command-line front end for the build-failure triage pipeline.

Twelve subcommands cover the pipeline end to end: ingest and validate an
issue-tracker export, label build failures heuristically, extract the
feature matrix, filter redundant features, fit and apply the
positive-unlabeled classifiers, evaluate them against baselines, check the
random-labeling assumption, rank features by importance, validate across
projects, generate synthetic benchmark data, and collate everything into
one report.

Conventions shared by every command:
  - outputs are written atomically (temp file in the target directory,
    then rename) and are byte-identical across reruns with the same
    inputs and seed;
  - commands that involve randomness require an explicit --seed;
  - a JSON --config file can supply any flag value and wins over flags
    given on the command line;
  - exit status is 0 on success, 1 for usage problems, 2 for bad input
    data, and 3 for an internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import pu
from .ci_events import EventConfig, detect_qa_bot, extract_build_events
from .corpus import Corpus, load_corpus, serialize_corpus, validate_corpus
from .errors import BuildTriageError, DataError, InternalError
from .evaluation import (
    AucMode,
    PQNSplit,
    baseline_constant_positive,
    baseline_hpem,
    baseline_random,
    build_pqn,
    cross_project_validate,
    hpem_linkage,
    repeat_runs,
    run_cv,
)
from .features import (
    FeatureConfig,
    extract_features,
    read_feature_csv,
    write_feature_csv,
)
from .forest import ForestParams
from .heuristics import (
    DEFAULT_KEYWORDS,
    compute_time_misspent,
    label_corpus,
    summarize_time_misspent,
)
from .importance import METRICS, cv_importance
from .scar import DEFAULT_ALPHA, scar_test
from .selection import (
    DEFAULT_PRIORITY,
    DEFAULT_R2_THRESHOLD,
    DEFAULT_RHO_THRESHOLD,
    render_dendrogram,
    run_selection,
)
from .synth import GeneratorSpec, generate

USAGE_EXIT = 1
DATA_EXIT = 2
INTERNAL_EXIT = 3

STOCHASTIC_COMMANDS = frozenset(
    {"train", "eval", "scar-test", "importance", "crossproject", "synth"}
)

# Conventional artifact names the report command looks for under --dir.
LABEL_SUMMARY_NAME = "summary.json"
SELECTION_NAME = "selection.json"
METRICS_NAME = "metrics.json"
IMPORTANCE_NAME = "importance.csv"
SCAR_NAME = "scar.json"
CROSSPROJECT_NAME = "crossproject.json"


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs shared across commands, merged from flags and --config."""

    command: str
    project: Optional[str] = None
    bot: Optional[str] = None
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    priority: tuple[str, ...] = DEFAULT_PRIORITY
    n_trees: Optional[int] = None
    max_depth: Optional[int] = None
    min_leaf_weight: Optional[float] = None
    feature_subsample: Optional[float] = None
    folds: int = 10
    runs: int = 1
    threshold: float = 0.5
    seed: Optional[int] = None

    def __post_init__(self):
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValueError(f"{self.command} requires a seed")

    def forest_params(self, seed: int) -> ForestParams:
        kwargs: dict = {"rng_seed": int(seed)}
        for name in ("n_trees", "max_depth", "min_leaf_weight", "feature_subsample"):
            value = getattr(self, name)
            if value is not None:
                kwargs[name] = value
        return ForestParams(**kwargs)


class _UsageError(Exception):
    """A problem argparse cannot catch but that is still the caller's."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this interface reserves 2 for
    # data problems, so remap
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _atomic_write(path: str, text: str) -> None:
    target = os.path.abspath(path)
    directory = os.path.dirname(target)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".buildtriage-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _read_json(path: str):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def _load_features(path: str):
    try:
        return read_feature_csv(_read_text(path))
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _split_keywords(raw: Optional[str]) -> Optional[tuple[str, ...]]:
    if raw is None:
        return None
    words = tuple(w.strip() for w in raw.split(",") if w.strip())
    if not words:
        raise _UsageError("--keywords must name at least one phrase")
    return words


def _restrict_columns(X: np.ndarray, columns: Sequence[str],
                      wanted: Sequence[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Project the matrix onto ``wanted`` columns, keeping file order."""
    keep = set(wanted)
    missing = keep - set(columns)
    if missing:
        raise DataError(
            f"feature file lacks required columns: {sorted(missing)}"
        )
    idx = [i for i, name in enumerate(columns) if name in keep]
    return X[:, idx], tuple(columns[i] for i in idx)


def _apply_selection(X: np.ndarray, columns: Sequence[str],
                     selection_path: Optional[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    if selection_path is None:
        return X, tuple(columns)
    report = _read_json(selection_path)
    retained = report.get("retained")
    if not isinstance(retained, list) or not retained:
        raise DataError(f"{selection_path} carries no retained-feature list")
    return _restrict_columns(X, columns, retained)


def _load_split(features_path: str, manual_path: str,
                selection_path: Optional[str] = None) -> tuple[PQNSplit, tuple[str, ...]]:
    keys, X, _, columns = _load_features(features_path)
    X, names = _apply_selection(X, columns, selection_path)
    manual = _read_json(manual_path)
    if not isinstance(manual, dict):
        raise DataError(f"{manual_path} must hold an object with p/u/q lists")
    return build_pqn(keys, X, manual), names


def _resolve_bot(corpus: Corpus, override: Optional[str]) -> str:
    return override if override else detect_qa_bot(corpus)


def _event_config(args) -> Optional[EventConfig]:
    mapping = getattr(args, "events", None)
    if not mapping:
        return None
    try:
        return EventConfig.from_mapping(mapping)
    except (TypeError, ValueError) as exc:
        raise _UsageError(f"bad events config: {exc}") from exc


def _feature_config(args) -> Optional[FeatureConfig]:
    mapping = getattr(args, "feature_extraction", None)
    if not mapping:
        return None
    try:
        return FeatureConfig.from_mapping(mapping)
    except (TypeError, ValueError) as exc:
        raise _UsageError(f"bad feature_extraction config: {exc}") from exc


def _merge_config_file(args: argparse.Namespace) -> argparse.Namespace:
    """Overlay --config values onto parsed flags; the file wins."""
    path = getattr(args, "config", None)
    if path is None:
        return args
    mapping = _read_json(path)
    if not isinstance(mapping, dict):
        raise _UsageError(f"{path} must hold a JSON object")
    for raw_key, value in mapping.items():
        key = raw_key.replace("-", "_")
        if key in ("events", "feature_extraction"):
            if not isinstance(value, dict):
                raise _UsageError(f"config key {raw_key!r} must be an object")
            setattr(args, key, value)
            continue
        if key == "config" or not hasattr(args, key):
            raise _UsageError(f"config key {raw_key!r} is not a flag of this command")
        setattr(args, key, value)
    return args


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    keywords = _split_keywords(getattr(args, "keywords", None))
    priority = _split_keywords(getattr(args, "priority", None))
    try:
        return PipelineConfig(
            command=args.cmd,
            project=getattr(args, "project", None),
            bot=getattr(args, "bot", None),
            keywords=keywords or DEFAULT_KEYWORDS,
            priority=priority or DEFAULT_PRIORITY,
            n_trees=getattr(args, "n_trees", None),
            max_depth=getattr(args, "max_depth", None),
            min_leaf_weight=getattr(args, "min_leaf_weight", None),
            feature_subsample=getattr(args, "feature_subsample", None),
            folds=getattr(args, "folds", 10),
            runs=getattr(args, "runs", 1),
            threshold=getattr(args, "threshold", 0.5),
            seed=getattr(args, "seed", None),
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _confusion_metrics_dict(pair) -> dict:
    conf, metrics = pair
    return {"confusion": conf.to_dict(), "metrics": metrics.to_dict()}


# ---------------------------------------------------------------- commands


def _cmd_ingest(args, cfg: PipelineConfig, out) -> int:
    corpus = load_corpus(args.input, args.project)
    violations = validate_corpus(corpus)
    _atomic_write(args.output, serialize_corpus(corpus))
    if args.violations:
        payload = [
            {"issue_id": v.issue_id, "rule": v.rule, "detail": v.detail}
            for v in violations
        ]
        _atomic_write(args.violations, _json_text(payload))
    print(
        f"ingested {len(corpus)} issues for {corpus.project}; "
        f"{len(violations)} validation violations",
        file=out,
    )
    return 0


def _cmd_label(args, cfg: PipelineConfig, out) -> int:
    corpus = load_corpus(args.input, args.project)
    event_config = _event_config(args)
    bot = _resolve_bot(corpus, cfg.bot)
    events_by_issue = {
        issue.issue_id: extract_build_events(issue, bot, event_config)
        for issue in corpus.issues
    }
    labels_by_issue = label_corpus(corpus, events_by_issue, cfg.keywords)

    lines = []
    hours: list[float] = []
    n_events = n_failures = n_flagged = 0
    for issue in corpus.issues:
        events = events_by_issue[issue.issue_id]
        n_events += len(events)
        index_by_comment = {e.comment_index: i for i, e in enumerate(events)}
        for label in labels_by_issue[issue.issue_id]:
            n_failures += 1
            row = {
                "issue_id": issue.issue_id,
                "event_index": index_by_comment[label.event.comment_index],
                "flagged": label.flagged,
                "matched_keyword": label.matched_keyword,
                "hours_misspent": None,
            }
            if label.flagged:
                n_flagged += 1
                spent = compute_time_misspent(label, issue)
                row["hours_misspent"] = spent.hours
                hours.append(spent.hours)
            lines.append(json.dumps(row, sort_keys=True))
    _atomic_write(args.output, "".join(line + "\n" for line in lines))

    if n_failures == 0:
        raise DataError(f"{corpus.project}: no build failures to label")
    prevalence = n_flagged / n_failures
    if args.summary:
        summary = {
            "project": corpus.project,
            "bot": bot,
            "n_issues": len(corpus),
            "n_events": n_events,
            "n_failures": n_failures,
            "n_flagged": n_flagged,
            "prevalence": prevalence,
            "time_misspent": summarize_time_misspent({corpus.project: hours}),
        }
        _atomic_write(args.summary, _json_text(summary))
    print(
        f"labeled {n_failures} failures across {len(corpus)} issues; "
        f"flagged {n_flagged}/{n_failures} = {prevalence:.4g}",
        file=out,
    )
    return 0


def _cmd_features(args, cfg: PipelineConfig, out) -> int:
    corpus = load_corpus(args.input, args.project)
    bot = _resolve_bot(corpus, cfg.bot)
    table = extract_features(
        corpus,
        bot,
        event_config=_event_config(args),
        feature_config=_feature_config(args),
        keywords=cfg.keywords,
    )
    _atomic_write(args.output, write_feature_csv(table))
    print(
        f"extracted {len(table.keys)} failure rows from {len(corpus)} issues",
        file=out,
    )
    return 0


def _cmd_select(args, cfg: PipelineConfig, out) -> int:
    _, X, _, columns = _load_features(args.features)
    report = run_selection(
        X, columns, threshold=args.rho, r2_threshold=args.r2,
        priority=cfg.priority,
    )
    _atomic_write(args.output, _json_text(report.to_dict()))
    if args.dendrogram:
        _atomic_write(
            args.dendrogram,
            render_dendrogram(report.rho_matrix, report.feature_names),
        )
    print(
        f"retained {len(report.retained)} of {len(columns)} features; "
        f"removed {len(report.removed)}",
        file=out,
    )
    return 0


def _cmd_train(args, cfg: PipelineConfig, out) -> int:
    _, X, flags, columns = _load_features(args.features)
    X, names = _apply_selection(X, columns, args.selection)
    mask = flags.astype(bool)
    P = X[mask]
    U = X[~mask]
    params = cfg.forest_params(cfg.seed)
    fit = pu.fit_classic if args.model == "classic" else pu.fit_weighted
    model = fit(P, U, params=params, threshold=cfg.threshold,
                retained_features=names)
    _atomic_write(args.output, _json_text(model.to_dict()))
    print(
        f"trained {args.model} model on {P.shape[0]} flagged / "
        f"{U.shape[0]} unlabeled rows; c_hat={model.c_hat:.4f}",
        file=out,
    )
    return 0


def _cmd_predict(args, cfg: PipelineConfig, out) -> int:
    payload = _read_json(args.model)
    try:
        model = pu.PUModel.from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.model}: {exc}") from exc
    keys, X, _, columns = _load_features(args.input)
    if model.retained_features:
        X, _ = _restrict_columns(X, columns, model.retained_features)
    scores = np.atleast_1d(np.asarray(pu.predict(model, X), dtype=np.float64))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["issue_id", "event_index", "score", "verdict"])
    for (issue_id, event_index), score in zip(keys, scores):
        verdict = (
            pu.Classification.UNRELATED
            if score >= model.threshold
            else pu.Classification.NOT_FLAGGED
        )
        writer.writerow([issue_id, event_index, repr(float(score)), verdict.value])
    _atomic_write(args.output, buf.getvalue())
    flagged = int((scores >= model.threshold).sum())
    print(f"scored {len(keys)} rows; {flagged} judged unrelated", file=out)
    return 0


def _auc_mode(value: str) -> AucMode:
    return AucMode.POOLED if value == "pooled" else AucMode.PER_FOLD_MEAN


def _cmd_eval(args, cfg: PipelineConfig, out) -> int:
    split, _ = _load_split(args.features, args.manual, args.selection)
    params = cfg.forest_params(cfg.seed)
    mode = _auc_mode(args.auc_mode)
    cv = run_cv(split, args.model, folds=cfg.folds, seed=cfg.seed,
                params=params, threshold=cfg.threshold, auc_mode=mode)
    result: dict = {
        "command": "eval",
        "model": args.model,
        "folds": cfg.folds,
        "seed": cfg.seed,
        "threshold": cfg.threshold,
        "auc_mode": args.auc_mode,
        "sizes": split.to_dict()["sizes"],
        "combined": cv.combined.to_dict(),
        "metrics": cv.metrics.to_dict(),
        "fold_matrices": [m.to_dict() for m in cv.fold_matrices],
    }
    if cfg.runs > 1:
        summary = repeat_runs(
            split, args.model, n_runs=cfg.runs, folds=cfg.folds,
            master_seed=cfg.seed, params=params, threshold=cfg.threshold,
            auc_mode=mode,
        )
        result["runs"] = summary.to_dict()
    if args.baselines:
        baselines = {
            "random": _confusion_metrics_dict(baseline_random(split, cfg.seed)),
            "constant_positive": _confusion_metrics_dict(
                baseline_constant_positive(split)
            ),
        }
        if args.corpus:
            if not cfg.project:
                raise _UsageError("--corpus needs --project to load the issues")
            corpus = load_corpus(args.corpus, cfg.project)
            linkage = hpem_linkage(
                corpus, _resolve_bot(corpus, cfg.bot), _event_config(args)
            )
            baselines["hpem"] = _confusion_metrics_dict(
                baseline_hpem(split, linkage, overlap=args.hpem_overlap)
            )
        result["baselines"] = baselines
    _atomic_write(args.output, _json_text(result))
    m = cv.metrics
    print(
        f"{args.model}: precision={m.precision:.4f} recall={m.recall:.4f} "
        f"f1={m.f1:.4f} auc={m.auc:.4f}",
        file=out,
    )
    return 0


def _cmd_scar_test(args, cfg: PipelineConfig, out) -> int:
    _, X, flags, columns = _load_features(args.features)
    X, _ = _apply_selection(X, columns, args.selection)
    mask = flags.astype(bool)
    P = X[mask]
    U = X[~mask]
    pi_hat = args.pi
    pi_source = "flag"
    if pi_hat is None and args.manual:
        manual = _read_json(args.manual)
        u_keys = manual.get("u", [])
        q_keys = manual.get("q", [])
        if not u_keys:
            raise DataError(f"{args.manual} has an empty evaluation sample")
        pi_hat = len(q_keys) / len(u_keys)
        pi_source = "manual labels"
    elif pi_hat is None:
        pi_source = "estimated"
    B = 1000 if args.full_bootstrap else args.b
    result = scar_test(P, U, B=B, alpha=args.alpha, seed=cfg.seed, pi_hat=pi_hat)
    payload = {
        "command": "scar-test",
        "seed": cfg.seed,
        "pi_source": pi_source,
        "result": result.to_dict(),
    }
    _atomic_write(args.output, _json_text(payload))
    verdict = "rejected" if result.reject else "plausible"
    print(
        f"random-labeling assumption {verdict}: statistic={result.statistic:.4f} "
        f"p={result.p_value:.4f} (B={result.B}, alpha={result.alpha})",
        file=out,
    )
    return 0


def _cmd_importance(args, cfg: PipelineConfig, out) -> int:
    split, names = _load_split(args.features, args.manual, args.selection)
    report = cv_importance(
        split, args.model, names, metric=args.metric, folds=cfg.folds,
        seed=cfg.seed, params=cfg.forest_params(cfg.seed),
        threshold=cfg.threshold, n_repeats=args.repeats,
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "rank", "median", "mean", "std"])
    for row in report.to_dict()["features"]:
        writer.writerow([
            row["feature"], row["rank"], repr(row["median"]),
            repr(row["mean"]), repr(row["std"]),
        ])
    _atomic_write(args.output, buf.getvalue())
    top = [r["feature"] for r in report.to_dict()["features"][:3]]
    print(
        f"ranked {len(names)} features by {args.metric} drop; top: "
        + ", ".join(top),
        file=out,
    )
    return 0


def _cmd_crossproject(args, cfg: PipelineConfig, out) -> int:
    mapping = _read_json(args.projects)
    if not isinstance(mapping, dict) or len(mapping) < 2:
        raise DataError(f"{args.projects} must map >= 2 project names to paths")
    base = os.path.dirname(os.path.abspath(args.projects))

    def resolve(path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(base, path)

    splits = []
    for name in sorted(mapping):
        entry = mapping[name]
        if not isinstance(entry, dict) or "features" not in entry or "manual" not in entry:
            raise DataError(f"project {name!r} needs features and manual paths")
        split, _ = _load_split(
            resolve(entry["features"]), resolve(entry["manual"]), args.selection
        )
        splits.append((name, split))
    results = cross_project_validate(
        splits, args.model, seed=cfg.seed,
        params=cfg.forest_params(cfg.seed), threshold=cfg.threshold,
    )
    payload = {
        "command": "crossproject",
        "model": args.model,
        "seed": cfg.seed,
        "projects": {
            name: _confusion_metrics_dict(pair) for name, pair in results.items()
        },
    }
    _atomic_write(args.output, _json_text(payload))
    for name in sorted(results):
        m = results[name][1]
        print(f"{name}: f1={m.f1:.4f} auc={m.auc:.4f}", file=out)
    return 0


def _cmd_synth(args, cfg: PipelineConfig, out) -> int:
    spec = GeneratorSpec(
        n=args.n, pi=args.pi, c_true=args.c, dim=args.dim,
        separation=args.separation, labeling_bias=args.bias, seed=cfg.seed,
    )
    X, y, s = generate(spec)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["issue_id", "event_index"]
        + [f"x{j}" for j in range(args.dim)]
        + ["y_true", "s"]
    )
    for i in range(args.n):
        writer.writerow(
            [f"synth-{i:06d}", 0]
            + [repr(float(v)) for v in X[i]]
            + [int(y[i]), int(s[i])]
        )
    _atomic_write(args.output, buf.getvalue())
    print(
        f"generated {args.n} rows: {int(y.sum())} positive, "
        f"{int(s.sum())} labeled",
        file=out,
    )
    return 0


# ----------------------------------------------------------------- report

# Reference results from the published seven-project Apache issue-tracker
# study of unrelated build failures. They describe that study's corpus and
# are not reproducible from local data; the report prints them beside the
# local numbers so directional agreement is easy to check.
_REFERENCE_TABLES = """\
### Corpus scale

Heuristic labeling found 10,316 unrelated-failure candidates among 77,354
build failures (prevalence 10316/77354 = 0.1334). The pooled evaluation
sample held U = 2,510 rows with P = 700, Q = 1,179, and N = 1,331.

### Time misspent on unrelated failures (hours)

| Project | Flagged | Median | Mean |
|---|---|---|---|
| AMBARI | 177 | 4.87 | 230.99 |
| HADOOP | 1472 | 7.07 | 31.61 |
| HBASE | 1503 | 5.24 | 32.60 |
| HDDS | 210 | 2.43 | 16.70 |
| HDFS | 2936 | 6.99 | 118.11 |
| HIVE | 2368 | 8.37 | 18.89 |
| YARN | 1650 | 4.18 | 11.51 |
| Total | 10316 | 5.24 | 63.03 |

### Within-project classification (median over 100 runs)

| Project | Model | Precision | Recall | F1 | AUC |
|---|---|---|---|---|---|
| AMBARI | weighted | 0.84 | 1.00 | 0.91 | 0.97 |
| AMBARI | classic | 0.83 | 0.97 | 0.89 | 0.62 |
| AMBARI | random | 0.83 | 0.51 | 0.63 | 0.50 |
| AMBARI | constant positive | 0.83 | 1.00 | 0.90 | 0.50 |
| AMBARI | prior-failure match | 0.88 | 0.22 | 0.35 | 0.54 |
| HADOOP | weighted | 0.85 | 0.59 | 0.70 | 0.82 |
| HADOOP | classic | 0.52 | 0.84 | 0.64 | 0.64 |
| HADOOP | random | 0.47 | 0.50 | 0.48 | 0.50 |
| HADOOP | constant positive | 0.47 | 1.00 | 0.64 | 0.50 |
| HADOOP | prior-failure match | 0.47 | 0.12 | 0.19 | 0.50 |
| HBASE | weighted | 0.70 | 0.58 | 0.64 | 0.63 |
| HBASE | classic | 0.62 | 0.93 | 0.74 | 0.54 |
| HBASE | random | 0.62 | 0.50 | 0.55 | 0.50 |
| HBASE | constant positive | 0.61 | 1.00 | 0.76 | 0.50 |
| HBASE | prior-failure match | 0.69 | 0.39 | 0.50 | 0.56 |
| HDDS | weighted | 0.83 | 0.80 | 0.82 | 0.86 |
| HDDS | classic | 0.61 | 0.89 | 0.73 | 0.69 |
| HDDS | random | 0.57 | 0.50 | 0.53 | 0.50 |
| HDDS | constant positive | 0.57 | 1.00 | 0.73 | 0.50 |
| HDDS | prior-failure match | 0.69 | 0.34 | 0.46 | 0.56 |
| HDFS | weighted | 0.88 | 0.66 | 0.75 | 0.85 |
| HDFS | classic | 0.59 | 0.87 | 0.70 | 0.68 |
| HDFS | random | 0.55 | 0.50 | 0.53 | 0.50 |
| HDFS | constant positive | 0.55 | 1.00 | 0.71 | 0.50 |
| HDFS | prior-failure match | 0.60 | 0.12 | 0.20 | 0.51 |
| HIVE | weighted | 0.82 | 0.30 | 0.44 | 0.78 |
| HIVE | classic | 0.57 | 0.90 | 0.70 | 0.73 |
| HIVE | random | 0.47 | 0.51 | 0.49 | 0.50 |
| HIVE | constant positive | 0.46 | 1.00 | 0.63 | 0.50 |
| HIVE | prior-failure match | 0.47 | 0.96 | 0.63 | 0.51 |
| YARN | weighted | 0.81 | 0.51 | 0.63 | 0.74 |
| YARN | classic | 0.58 | 0.92 | 0.71 | 0.62 |
| YARN | random | 0.56 | 0.50 | 0.53 | 0.50 |
| YARN | constant positive | 0.56 | 1.00 | 0.72 | 0.50 |
| YARN | prior-failure match | 0.59 | 0.30 | 0.40 | 0.51 |

### Top-3 feature importance (weighted model, mean +/- std)

| Project | Top 1 | Top 2 | Top 3 |
|---|---|---|---|
| AMBARI | ci_latency_hours 0.3593 +/- 0.0021 | num_parallel_issues 0.2895 +/- 0.0020 | num_similar_failures 0.1190 +/- 0.0013 |
| HADOOP | ci_latency_hours 0.3711 +/- 0.0016 | num_prior_comments 0.2095 +/- 0.0015 | num_similar_failures 0.0872 +/- 0.0011 |
| HBASE | ci_latency_hours 0.3042 +/- 0.0016 | num_similar_failures 0.1986 +/- 0.0015 | num_prior_comments 0.1966 +/- 0.0015 |
| HDDS | ci_latency_hours 0.2244 +/- 0.0020 | num_similar_failures 0.1691 +/- 0.0014 | num_prior_comments 0.1575 +/- 0.0014 |
| HDFS | ci_latency_hours 0.2814 +/- 0.0018 | num_prior_comments 0.2173 +/- 0.0016 | num_similar_failures 0.1545 +/- 0.0013 |
| HIVE | num_similar_failures 0.1892 +/- 0.0020 | is_shared_same_emsg 0.1514 +/- 0.0015 | ci_latency_hours 0.1437 +/- 0.0015 |
| YARN | ci_latency_hours 0.2342 +/- 0.0015 | num_prior_comments 0.1720 +/- 0.0014 | modified_source_files 0.1406 +/- 0.0012 |

### Cross-project validation (mean +/- std, held-out project)

| Test project | Model | Precision | Recall | F1 | AUC |
|---|---|---|---|---|---|
| AMBARI | classic | 0.583 +/- 0.002 | 0.884 +/- 0.004 | 0.702 +/- 0.002 | 0.647 +/- 0.003 |
| AMBARI | weighted | 0.781 +/- 0.027 | 0.809 +/- 0.038 | 0.794 +/- 0.027 | 0.842 +/- 0.035 |
| HADOOP | classic | 0.641 +/- 0.002 | 0.902 +/- 0.005 | 0.749 +/- 0.002 | 0.684 +/- 0.003 |
| HADOOP | weighted | 0.816 +/- 0.020 | 0.967 +/- 0.011 | 0.885 +/- 0.013 | 0.962 +/- 0.013 |
| HBASE | classic | 0.631 +/- 0.003 | 0.882 +/- 0.005 | 0.735 +/- 0.003 | 0.704 +/- 0.003 |
| HBASE | weighted | 0.819 +/- 0.021 | 0.970 +/- 0.010 | 0.888 +/- 0.013 | 0.969 +/- 0.011 |
| HDDS | classic | 0.628 +/- 0.002 | 0.892 +/- 0.005 | 0.737 +/- 0.003 | 0.683 +/- 0.003 |
| HDDS | weighted | 0.801 +/- 0.020 | 0.958 +/- 0.011 | 0.873 +/- 0.013 | 0.954 +/- 0.014 |
| HDFS | classic | 0.634 +/- 0.003 | 0.894 +/- 0.005 | 0.742 +/- 0.003 | 0.687 +/- 0.003 |
| HDFS | weighted | 0.812 +/- 0.020 | 0.971 +/- 0.008 | 0.884 +/- 0.012 | 0.969 +/- 0.009 |
| HIVE | classic | 0.638 +/- 0.003 | 0.894 +/- 0.005 | 0.745 +/- 0.003 | 0.673 +/- 0.003 |
| HIVE | weighted | 0.810 +/- 0.015 | 0.975 +/- 0.007 | 0.885 +/- 0.010 | 0.968 +/- 0.009 |
| YARN | classic | 0.626 +/- 0.002 | 0.886 +/- 0.005 | 0.734 +/- 0.003 | 0.684 +/- 0.003 |
| YARN | weighted | 0.823 +/- 0.020 | 0.961 +/- 0.012 | 0.886 +/- 0.012 | 0.965 +/- 0.009 |

### Random-labeling check

With B = 1000 bootstrap replicates, all seven projects returned p > 0.05:
no evidence against labeling positives completely at random.
"""


def _report_path(args, flag_value: Optional[str], name: str) -> str:
    return flag_value if flag_value else os.path.join(args.dir, name)


def _fmt4(value) -> str:
    return f"{float(value):.4f}"


def _report_corpus_section(path: str, parts: list[str]) -> None:
    if not os.path.exists(path):
        parts.append("Not available (run `buildtriage label --summary ...`).\n")
        return
    summary = _read_json(path)
    flagged = summary["n_flagged"]
    failures = summary["n_failures"]
    parts.append(
        f"Project `{summary['project']}` (bot `{summary['bot']}`): "
        f"{summary['n_issues']} issues, {summary['n_events']} build events, "
        f"{failures} failures.\n\n"
        f"Heuristic prevalence: {flagged}/{failures} = "
        f"{flagged / failures:.4g}\n"
    )
    rows = summary.get("time_misspent", {})
    if rows:
        parts.append("\n| Scope | Count | Median h | Mean h | Std h |\n")
        parts.append("|---|---|---|---|---|\n")
        for scope in sorted(rows):
            r = rows[scope]
            parts.append(
                f"| {scope} | {r['count']} | {_fmt4(r['median_hours'])} "
                f"| {_fmt4(r['mean_hours'])} | {_fmt4(r['stdev_hours'])} |\n"
            )


def _report_selection_section(path: str, parts: list[str]) -> None:
    if not os.path.exists(path):
        parts.append("Not available (run `buildtriage select`).\n")
        return
    report = _read_json(path)
    retained = report.get("retained", [])
    removed = report.get("removed", [])
    parts.append(
        f"Retained {len(retained)} features: " + ", ".join(retained) + "\n"
    )
    if removed:
        parts.append("\n| Removed feature | Reason |\n|---|---|\n")
        for entry in removed:
            parts.append(f"| {entry['feature']} | {entry['reason']} |\n")


def _report_metrics_section(path: str, parts: list[str]) -> None:
    if not os.path.exists(path):
        parts.append("Not available (run `buildtriage eval`).\n")
        return
    result = _read_json(path)
    sizes = result["sizes"]
    conf = result["combined"]
    parts.append(
        f"Model `{result['model']}`, {result['folds']}-fold CV, seed "
        f"{result['seed']}; P={sizes['P']} Q={sizes['Q']} N={sizes['N']}.\n\n"
        f"Combined confusion: a={conf['a']} b={conf['b']} "
        f"c={conf['c_fp']} d={conf['d']}\n"
    )
    parts.append("\n| Source | Precision | Recall | F1 | AUC |\n")
    parts.append("|---|---|---|---|---|\n")

    def metric_row(label: str, m: dict) -> str:
        return (
            f"| {label} | {_fmt4(m['precision'])} | {_fmt4(m['recall'])} "
            f"| {_fmt4(m['f1'])} | {_fmt4(m['auc'])} |\n"
        )

    parts.append(metric_row(result["model"], result["metrics"]))
    runs = result.get("runs")
    if runs:
        parts.append(metric_row(f"median of {runs['n_runs']} runs", runs["median"]))
    for name, entry in sorted(result.get("baselines", {}).items()):
        parts.append(metric_row(name, entry["metrics"]))


def _report_importance_section(path: str, parts: list[str]) -> None:
    if not os.path.exists(path):
        parts.append("Not available (run `buildtriage importance`).\n")
        return
    reader = csv.DictReader(io.StringIO(_read_text(path)))
    rows = sorted(reader, key=lambda r: int(r["rank"]))
    parts.append("| Rank | Feature | Median drop | Mean +/- std |\n")
    parts.append("|---|---|---|---|\n")
    for row in rows[:10]:
        parts.append(
            f"| {row['rank']} | {row['feature']} | {_fmt4(row['median'])} "
            f"| {_fmt4(row['mean'])} +/- {_fmt4(row['std'])} |\n"
        )
    if len(rows) > 10:
        parts.append(f"\n({len(rows) - 10} lower-ranked features omitted.)\n")


def _report_scar_section(path: str, parts: list[str]) -> None:
    if not os.path.exists(path):
        parts.append("Not available (run `buildtriage scar-test`).\n")
        return
    payload = _read_json(path)
    result = payload["result"]
    verdict = "rejected" if result["reject"] else "plausible"
    parts.append(
        f"Random-labeling assumption **{verdict}**: statistic "
        f"{_fmt4(result['statistic'])}, p = {_fmt4(result['p_value'])} "
        f"(B = {result['B']}, alpha = {result['alpha']}, pi_hat = "
        f"{_fmt4(result['pi_hat'])}).\n"
    )


def _report_crossproject_section(path: str, parts: list[str]) -> None:
    if not os.path.exists(path):
        parts.append("Not available (run `buildtriage crossproject`).\n")
        return
    payload = _read_json(path)
    parts.append(
        f"Model `{payload['model']}`, seed {payload['seed']}.\n\n"
        "| Held-out project | Precision | Recall | F1 | AUC |\n"
        "|---|---|---|---|---|\n"
    )
    for name in sorted(payload["projects"]):
        m = payload["projects"][name]["metrics"]
        parts.append(
            f"| {name} | {_fmt4(m['precision'])} | {_fmt4(m['recall'])} "
            f"| {_fmt4(m['f1'])} | {_fmt4(m['auc'])} |\n"
        )


def _cmd_report(args, cfg: PipelineConfig, out) -> int:
    sections = [
        ("Corpus and heuristic labels",
         _report_path(args, args.label_summary, LABEL_SUMMARY_NAME),
         _report_corpus_section),
        ("Feature selection",
         _report_path(args, args.selection, SELECTION_NAME),
         _report_selection_section),
        ("Classification metrics",
         _report_path(args, args.metrics, METRICS_NAME),
         _report_metrics_section),
        ("Feature importance",
         _report_path(args, args.importance, IMPORTANCE_NAME),
         _report_importance_section),
        ("Random-labeling check",
         _report_path(args, args.scar, SCAR_NAME),
         _report_scar_section),
        ("Cross-project validation",
         _report_path(args, args.crossproject, CROSSPROJECT_NAME),
         _report_crossproject_section),
    ]
    parts: list[str] = ["# Build-failure triage report\n"]
    populated = 0
    for title, path, renderer in sections:
        parts.append(f"\n## {title}\n\n")
        before = len(parts)
        renderer(path, parts)
        if os.path.exists(path):
            populated += 1
        assert len(parts) > before or parts[-1], "renderer wrote nothing"
    parts.append(
        "\n## Reference results (published study; not reproducible here)\n\n"
    )
    parts.append(_REFERENCE_TABLES)
    _atomic_write(args.output, "".join(parts))
    print(
        f"report written to {args.output}; {populated} of {len(sections)} "
        "sections populated",
        file=out,
    )
    return 0


# ------------------------------------------------------------------ parser


def _add_config_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--config",
        help="JSON file whose keys override same-named flags",
    )


def _add_forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-trees", type=int, help="trees per ensemble")
    p.add_argument("--max-depth", type=int, help="maximum tree depth")
    p.add_argument("--min-leaf-weight", type=float,
                   help="minimum total weight per leaf")
    p.add_argument("--feature-subsample", type=float,
                   help="fraction of features tried per split")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="buildtriage",
        description="identify CI build failures unrelated to the code push",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="validate and normalize an issue export")
    p.add_argument("--input", required=True, help="issue-tracker JSONL export")
    p.add_argument("--project", required=True, help="project key to keep")
    p.add_argument("--output", required=True, help="normalized JSONL path")
    p.add_argument("--violations", help="optional JSON list of rule breaches")
    _add_config_flag(p)

    p = sub.add_parser("label", help="flag failures dismissed as unrelated")
    p.add_argument("--input", required=True)
    p.add_argument("--project", required=True)
    p.add_argument("--output", required=True, help="per-event labels, JSONL")
    p.add_argument("--summary", help="optional summary JSON path")
    p.add_argument("--bot", help="CI bot author; default autodetect")
    p.add_argument("--keywords", help="comma-separated dismissal phrases")
    _add_config_flag(p)

    p = sub.add_parser("features", help="extract the per-failure feature matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--project", required=True)
    p.add_argument("--output", required=True, help="feature CSV path")
    p.add_argument("--bot", help="CI bot author; default autodetect")
    p.add_argument("--keywords", help="comma-separated dismissal phrases")
    _add_config_flag(p)

    p = sub.add_parser("select", help="drop correlated and redundant features")
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--output", required=True, help="selection report JSON")
    p.add_argument("--rho", type=float, default=DEFAULT_RHO_THRESHOLD,
                   help="rank-correlation cutoff")
    p.add_argument("--r2", type=float, default=DEFAULT_R2_THRESHOLD,
                   help="explained-variance cutoff")
    p.add_argument("--priority", help="comma-separated keep-order override")
    p.add_argument("--dendrogram", help="optional text dendrogram path")
    _add_config_flag(p)

    p = sub.add_parser("train", help="fit a positive-unlabeled classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, choices=["classic", "weighted"])
    p.add_argument("--output", required=True, help="model JSON path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--selection", help="selection report restricting columns")
    p.add_argument("--threshold", type=float, default=0.5)
    _add_forest_flags(p)
    _add_config_flag(p)

    p = sub.add_parser("predict", help="score rows with a trained model")
    p.add_argument("--model", required=True, help="model JSON from train")
    p.add_argument("--input", required=True, help="feature CSV")
    p.add_argument("--output", required=True, help="prediction CSV")
    _add_config_flag(p)

    p = sub.add_parser("eval", help="cross-validate against manual labels")
    p.add_argument("--features", required=True)
    p.add_argument("--manual", required=True,
                   help="JSON with p/u/q key lists")
    p.add_argument("--model", required=True, choices=["classic", "weighted"])
    p.add_argument("--output", required=True, help="metrics JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--runs", type=int, default=1,
                   help="repeat the CV this many times and summarize")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--auc-mode", choices=["pooled", "per-fold-mean"],
                   default="pooled")
    p.add_argument("--baselines", action="store_true",
                   help="also score random and constant-positive baselines")
    p.add_argument("--corpus", help="issue JSONL enabling the prior-failure "
                                    "match baseline")
    p.add_argument("--project", help="project key for --corpus")
    p.add_argument("--bot", help="CI bot author for --corpus")
    p.add_argument("--hpem-overlap", action="store_true",
                   help="relax the prior-failure match to any shared class")
    p.add_argument("--selection", help="selection report restricting columns")
    _add_forest_flags(p)
    _add_config_flag(p)

    p = sub.add_parser("scar-test",
                       help="test whether flags look completely random")
    p.add_argument("--features", required=True)
    p.add_argument("--output", required=True, help="test result JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--manual", help="manual labels supplying pi = |q|/|u|")
    p.add_argument("--pi", type=float,
                   help="positive share of the unlabeled pool")
    p.add_argument("--b", type=int, default=200,
                   help="bootstrap replicates")
    p.add_argument("--full-bootstrap", action="store_true",
                   help="use 1000 replicates regardless of --b")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--selection", help="selection report restricting columns")
    _add_config_flag(p)

    p = sub.add_parser("importance",
                       help="rank features by shuffled-column metric drop")
    p.add_argument("--features", required=True)
    p.add_argument("--manual", required=True)
    p.add_argument("--model", required=True, choices=["classic", "weighted"])
    p.add_argument("--output", required=True, help="importance CSV")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--metric", choices=list(METRICS), default="f1")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=5,
                   help="shuffles averaged per feature")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--selection", help="selection report restricting columns")
    _add_forest_flags(p)
    _add_config_flag(p)

    p = sub.add_parser("crossproject",
                       help="hold out each project and test on it")
    p.add_argument("--projects", required=True,
                   help="JSON mapping name -> {features, manual} paths")
    p.add_argument("--model", required=True, choices=["classic", "weighted"])
    p.add_argument("--output", required=True, help="results JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--selection", help="selection report restricting columns")
    _add_forest_flags(p)
    _add_config_flag(p)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--output", required=True, help="CSV path")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pi", type=float, required=True,
                   help="true positive prior")
    p.add_argument("--c", type=float, required=True,
                   help="labeling frequency among positives")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=2.0,
                   help="class-mean gap along the first axis")
    p.add_argument("--bias", type=float, default=0.0,
                   help="feature-dependent labeling tilt; 0 keeps labels random")
    _add_config_flag(p)

    p = sub.add_parser("report", help="collate pipeline outputs into markdown")
    p.add_argument("--dir", required=True,
                   help="directory holding the pipeline outputs")
    p.add_argument("--output", required=True, help="markdown path")
    p.add_argument("--label-summary", help=f"override {LABEL_SUMMARY_NAME}")
    p.add_argument("--selection", help=f"override {SELECTION_NAME}")
    p.add_argument("--metrics", help=f"override {METRICS_NAME}")
    p.add_argument("--importance", help=f"override {IMPORTANCE_NAME}")
    p.add_argument("--scar", help=f"override {SCAR_NAME}")
    p.add_argument("--crossproject", help=f"override {CROSSPROJECT_NAME}")
    _add_config_flag(p)

    return parser


_HANDLERS = {
    "ingest": _cmd_ingest,
    "label": _cmd_label,
    "features": _cmd_features,
    "select": _cmd_select,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "scar-test": _cmd_scar_test,
    "importance": _cmd_importance,
    "crossproject": _cmd_crossproject,
    "synth": _cmd_synth,
    "report": _cmd_report,
}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config_file(args)
        cfg = _pipeline_config(args)
        return _HANDLERS[args.cmd](args, cfg, out)
    except _UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except InternalError as exc:
        print(f"{parser.prog}: internal error: {exc}", file=sys.stderr)
        return INTERNAL_EXIT
    except (DataError, ZeroDivisionError) as exc:
        print(f"{parser.prog}: data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except BuildTriageError as exc:
        print(f"{parser.prog}: data error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
