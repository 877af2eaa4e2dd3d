"""Evaluation protocols: PQN datasets, repeated cross-validation, baselines,
and leave-one-project-out validation.

The evaluation frame has three row pools. P holds confirmed positives used
for training; Q holds confirmed positives hidden inside the unlabeled pool;
N is the rest of the unlabeled pool, scored as if negative even though it may
hide latent positives (metrics therefore underestimate true performance, and
reports must carry that caveat). Cross-validation partitions each pool
separately: fold i trains on P minus its share as positives against the
unlabeled remainder, then tests on its P and Q shares as actual positives
and its N share as actual negatives. Per-fold confusion matrices are summed
entrywise into one combined matrix, and AUC is computed once over the pooled
out-of-fold scores (a per-fold mean is available as an option).

Three reference baselines: a fair coin, the constant "always positive"
labeler, and a repeat-of-previous-error-message heuristic.
"""

from __future__ import annotations

import enum
import statistics
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from . import pu
from .ci_events import BuildEvent, BuildStatus, EventConfig, detect_qa_bot, extract_build_events
from .corpus import Corpus
from .errors import (DataError, DegenerateLabels, FeatureSchemaMismatch,
                     FoldTooSmall, MissingEventLinkage, OverlapError,
                     TooFewSamples)
from .forest import ForestParams


def rank_auc(labels, scores) -> float:
    """Area under the ROC curve via average ranks; ties share credit."""
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if y.shape != s.shape:
        raise ValueError("labels and scores must have equal lengths")
    n_pos = int((y == 1.0).sum())
    n_neg = int((y == 0.0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one row of each class")
    r = rankdata(s)
    pos_rank_sum = float(r[y == 1.0].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class PQNSplit:
    P: np.ndarray
    Q: np.ndarray
    N: np.ndarray
    keys_p: tuple = ()
    keys_q: tuple = ()
    keys_n: tuple = ()

    def __post_init__(self):
        pools = [set(self.keys_p), set(self.keys_q), set(self.keys_n)]
        total = sum(len(k) for k in pools)
        if len(set().union(*pools)) != total:
            raise OverlapError("P, Q and N row keys must be pairwise disjoint")

    @property
    def n_features(self) -> int:
        return self.P.shape[1]

    def to_dict(self) -> dict:
        return {
            "sizes": {"P": int(self.P.shape[0]), "Q": int(self.Q.shape[0]),
                      "N": int(self.N.shape[0])},
            "keys": {"P": list(self.keys_p), "Q": list(self.keys_q),
                     "N": list(self.keys_n)},
        }


@dataclass(frozen=True)
class CombinedConfusion:
    a: int      # actual positive, predicted positive
    b: int      # actual positive, predicted negative
    c_fp: int   # actual negative, predicted positive
    d: int      # actual negative, predicted negative

    def __post_init__(self):
        if min(self.a, self.b, self.c_fp, self.d) < 0:
            raise ValueError("confusion entries must be non-negative")

    def __add__(self, other: "CombinedConfusion") -> "CombinedConfusion":
        return CombinedConfusion(self.a + other.a, self.b + other.b,
                                 self.c_fp + other.c_fp, self.d + other.d)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c_fp": self.c_fp, "d": self.d}


@dataclass(frozen=True)
class MetricSet:
    precision: float
    recall: float
    f1: float
    auc: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "f1": self.f1, "auc": self.auc}


def metrics_from_confusion(conf: CombinedConfusion, auc: float) -> MetricSet:
    precision = conf.a / (conf.a + conf.c_fp) if conf.a + conf.c_fp else 0.0
    recall = conf.a / (conf.a + conf.b) if conf.a + conf.b else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return MetricSet(precision=precision, recall=recall, f1=f1, auc=auc)


def build_pqn(keys: Sequence, matrix, manual: Mapping) -> PQNSplit:
    """Assemble the evaluation frame from row keys and a manual-label map.

    ``manual`` carries three key lists: "p" (confirmed positives for
    training), "u" (the designated evaluation sample), and "q" (confirmed
    positives inside u). Rows in neither list are simply unused. A key in
    both p and u is contradictory.
    """
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(keys):
        raise DataError(
            f"matrix has {X.shape[0] if X.ndim == 2 else '?'} rows for {len(keys)} keys"
        )
    index = {k: i for i, k in enumerate(keys)}
    if len(index) != len(keys):
        raise DataError("row keys must be unique")

    def resolve(name: str) -> list:
        out = []
        for k in manual.get(name, []):
            kk = tuple(k) if isinstance(k, list) else k
            if kk not in index:
                raise DataError(f"manual label names unknown row {kk!r}")
            out.append(kk)
        return out

    p_keys = resolve("p")
    u_keys = resolve("u")
    q_keys = resolve("q")
    overlap = set(p_keys) & set(u_keys)
    if overlap:
        raise OverlapError(
            f"{len(overlap)} rows are marked both confirmed-positive and unlabeled"
        )
    stray = set(q_keys) - set(u_keys)
    if stray:
        raise DataError(
            f"{len(stray)} q rows are not inside the designated unlabeled sample"
        )
    q_set = set(q_keys)
    n_keys = [k for k in u_keys if k not in q_set]
    take = lambda ks: X[[index[k] for k in ks], :] if ks else np.empty((0, X.shape[1]))
    return PQNSplit(P=take(p_keys), Q=take(q_keys), N=take(n_keys),
                    keys_p=tuple(p_keys), keys_q=tuple(q_keys),
                    keys_n=tuple(n_keys))


@dataclass(frozen=True)
class CVResult:
    combined: CombinedConfusion
    metrics: MetricSet
    fold_matrices: tuple[CombinedConfusion, ...]
    pooled_labels: np.ndarray
    pooled_scores: np.ndarray

    def __iter__(self):
        return iter((self.combined, self.metrics))


class AucMode(enum.Enum):
    POOLED = "pooled"
    PER_FOLD_MEAN = "per_fold_mean"


def _normalize_kind(model_kind) -> pu.PUMode:
    if isinstance(model_kind, pu.PUMode):
        return model_kind
    return pu.PUMode(str(model_kind).lower())


def _fold_chunks(n: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


def run_cv(split: PQNSplit, model_kind, folds: int = 10, seed: int = 0,
           params: Optional[ForestParams] = None, threshold: float = 0.5,
           auc_mode: AucMode = AucMode.POOLED) -> CVResult:
    """Fold-partitioned training and testing with one combined matrix."""
    kind = _normalize_kind(model_kind)
    params = params or ForestParams()
    for name, pool in (("P", split.P), ("Q", split.Q), ("N", split.N)):
        if pool.shape[0] < folds:
            raise FoldTooSmall(
                f"{name} has {pool.shape[0]} rows, fewer than {folds} folds"
            )
    ss = np.random.SeedSequence([int(seed), 2])
    rng = np.random.default_rng(ss)
    chunks_p = _fold_chunks(split.P.shape[0], folds, rng)
    chunks_q = _fold_chunks(split.Q.shape[0], folds, rng)
    chunks_n = _fold_chunks(split.N.shape[0], folds, rng)
    fold_seeds = [int(c.generate_state(1, np.uint64)[0] >> 1)
                  for c in ss.spawn(folds)]

    fold_matrices = []
    labels_all = []
    scores_all = []
    fold_aucs = []
    for i in range(folds):
        p_test = chunks_p[i]
        q_test = chunks_q[i]
        n_test = chunks_n[i]
        p_train = np.setdiff1d(np.arange(split.P.shape[0]), p_test)
        q_train = np.setdiff1d(np.arange(split.Q.shape[0]), q_test)
        n_train = np.setdiff1d(np.arange(split.N.shape[0]), n_test)
        P_tr = split.P[p_train]
        U_tr = np.vstack([split.Q[q_train], split.N[n_train]])
        fold_params = ForestParams(
            n_trees=params.n_trees, max_depth=params.max_depth,
            min_leaf_weight=params.min_leaf_weight,
            feature_subsample=params.feature_subsample,
            rng_seed=fold_seeds[i])
        if kind is pu.PUMode.CLASSIC:
            model = pu.fit_classic(P_tr, U_tr, params=fold_params,
                                   threshold=threshold)
        else:
            model = pu.fit_weighted(P_tr, U_tr, params=fold_params,
                                    threshold=threshold)
        X_pos = np.vstack([split.P[p_test], split.Q[q_test]])
        X_neg = split.N[n_test]
        s_pos = np.atleast_1d(pu.predict(model, X_pos))
        s_neg = np.atleast_1d(pu.predict(model, X_neg))
        a = int((s_pos >= threshold).sum())
        b = int(s_pos.shape[0] - a)
        c_fp = int((s_neg >= threshold).sum())
        d = int(s_neg.shape[0] - c_fp)
        fold_matrices.append(CombinedConfusion(a, b, c_fp, d))
        labels_all.append(np.r_[np.ones(s_pos.shape[0]), np.zeros(s_neg.shape[0])])
        scores_all.append(np.r_[s_pos, s_neg])
        fold_aucs.append(rank_auc(labels_all[-1], scores_all[-1]))

    combined = fold_matrices[0]
    for m in fold_matrices[1:]:
        combined = combined + m
    labels = np.concatenate(labels_all)
    scores = np.concatenate(scores_all)
    auc = (rank_auc(labels, scores) if auc_mode is AucMode.POOLED
           else float(np.mean(fold_aucs)))
    return CVResult(combined=combined,
                    metrics=metrics_from_confusion(combined, auc),
                    fold_matrices=tuple(fold_matrices),
                    pooled_labels=labels, pooled_scores=scores)


@dataclass(frozen=True)
class RunSummary:
    runs: tuple[MetricSet, ...]
    median: MetricSet
    mean: MetricSet
    std: MetricSet

    def to_dict(self) -> dict:
        return {
            "n_runs": len(self.runs),
            "runs": [m.to_dict() for m in self.runs],
            "median": self.median.to_dict(),
            "mean": self.mean.to_dict(),
            "std": self.std.to_dict(),
        }


def repeat_runs(split: PQNSplit, model_kind, n_runs: int = 100,
                folds: int = 10, master_seed: int = 0,
                params: Optional[ForestParams] = None,
                threshold: float = 0.5,
                auc_mode: AucMode = AucMode.POOLED) -> RunSummary:
    """Independent repetitions of run_cv with derived seeds."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    children = np.random.SeedSequence([int(master_seed), 3]).spawn(n_runs)
    seeds = [int(c.generate_state(1, np.uint64)[0] >> 1) for c in children]
    runs = [run_cv(split, model_kind, folds=folds, seed=s, params=params,
                   threshold=threshold, auc_mode=auc_mode).metrics
            for s in seeds]

    def agg(fn) -> MetricSet:
        return MetricSet(
            precision=fn([m.precision for m in runs]),
            recall=fn([m.recall for m in runs]),
            f1=fn([m.f1 for m in runs]),
            auc=fn([m.auc for m in runs]),
        )

    return RunSummary(
        runs=tuple(runs),
        median=agg(statistics.median),
        mean=agg(statistics.fmean),
        std=agg(statistics.pstdev),
    )


def _test_frame(split: PQNSplit) -> tuple[np.ndarray, np.ndarray]:
    X = np.vstack([split.P, split.Q, split.N])
    y = np.r_[np.ones(split.P.shape[0] + split.Q.shape[0]),
              np.zeros(split.N.shape[0])]
    return X, y


def baseline_random(split: PQNSplit, seed: int) -> tuple[CombinedConfusion, MetricSet]:
    """Fair coin per row; the floor every learner must beat."""
    _, y = _test_frame(split)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 4]))
    scores = rng.random(y.shape[0])
    pred = scores >= 0.5
    conf = CombinedConfusion(
        a=int((pred & (y == 1)).sum()), b=int((~pred & (y == 1)).sum()),
        c_fp=int((pred & (y == 0)).sum()), d=int((~pred & (y == 0)).sum()))
    return conf, metrics_from_confusion(conf, rank_auc(y, scores))


def baseline_constant_positive(split: PQNSplit) -> tuple[CombinedConfusion, MetricSet]:
    """Label everything positive: recall 1, precision = positive prevalence."""
    n_pos = split.P.shape[0] + split.Q.shape[0]
    n_neg = split.N.shape[0]
    conf = CombinedConfusion(a=n_pos, b=0, c_fp=n_neg, d=0)
    _, y = _test_frame(split)
    return conf, metrics_from_confusion(conf, rank_auc(y, np.zeros_like(y)))


def hpem_linkage(corpus: Corpus, bot: Optional[str] = None,
                 config: Optional[EventConfig] = None) -> dict:
    """Map (issue_id, event_index) to (event, most recent prior failure)."""
    config = config or EventConfig()
    bot = bot or detect_qa_bot(corpus)
    linkage = {}
    for issue in corpus.issues:
        events = extract_build_events(issue, bot, config)
        prior_failure = None
        for idx, event in enumerate(events):
            if event.status is BuildStatus.FAILURE:
                linkage[(issue.issue_id, idx)] = (event, prior_failure)
                prior_failure = event
    return linkage


def baseline_hpem(split: PQNSplit, linkage: Mapping,
                  overlap: bool = False) -> tuple[CombinedConfusion, MetricSet]:
    """Positive iff the failure repeats the previous failure's classes.

    Set equality by default; ``overlap`` relaxes the match to a non-empty
    intersection. Every evaluation row must resolve through ``linkage`` to
    its build event and the most recent prior failure in the same issue.
    """
    keys = list(split.keys_p) + list(split.keys_q) + list(split.keys_n)
    if len(keys) != split.P.shape[0] + split.Q.shape[0] + split.N.shape[0]:
        raise MissingEventLinkage("evaluation rows carry no event keys")
    _, y = _test_frame(split)
    pred = np.zeros(len(keys), dtype=bool)
    for i, key in enumerate(keys):
        if key not in linkage:
            raise MissingEventLinkage(f"no build event linked to row {key!r}")
        event, prior = linkage[key]
        if prior is None or not event.failed_classes:
            continue
        if overlap:
            pred[i] = bool(event.failed_classes & prior.failed_classes)
        else:
            pred[i] = event.failed_classes == prior.failed_classes
    conf = CombinedConfusion(
        a=int((pred & (y == 1)).sum()), b=int((~pred & (y == 1)).sum()),
        c_fp=int((pred & (y == 0)).sum()), d=int((~pred & (y == 0)).sum()))
    return conf, metrics_from_confusion(conf, rank_auc(y, pred.astype(float)))


def cross_project_validate(projects: Sequence[tuple[str, PQNSplit]],
                           model_kind, seed: int = 0,
                           params: Optional[ForestParams] = None,
                           threshold: float = 0.5) -> dict:
    """Hold one project out, train on the rest, test on the held-out PQN."""
    if len(projects) < 2:
        raise TooFewSamples(
            f"cross-project validation needs >= 2 projects, got {len(projects)}"
        )
    widths = {split.n_features for _, split in projects}
    if len(widths) > 1:
        raise FeatureSchemaMismatch(
            f"projects disagree on feature count: {sorted(widths)}"
        )
    kind = _normalize_kind(model_kind)
    params = params or ForestParams()
    children = np.random.SeedSequence([int(seed), 5]).spawn(len(projects))
    results = {}
    for (name, split), child in zip(projects, children):
        others = [s for n, s in projects if n != name]
        P_tr = np.vstack([s.P for s in others])
        U_tr = np.vstack([np.vstack([s.Q, s.N]) for s in others])
        run_seed = int(child.generate_state(1, np.uint64)[0] >> 1)
        run_params = ForestParams(
            n_trees=params.n_trees, max_depth=params.max_depth,
            min_leaf_weight=params.min_leaf_weight,
            feature_subsample=params.feature_subsample, rng_seed=run_seed)
        if kind is pu.PUMode.CLASSIC:
            model = pu.fit_classic(P_tr, U_tr, params=run_params,
                                   threshold=threshold)
        else:
            model = pu.fit_weighted(P_tr, U_tr, params=run_params,
                                    threshold=threshold)
        X, y = _test_frame(split)
        s = np.atleast_1d(pu.predict(model, X))
        pred = s >= threshold
        conf = CombinedConfusion(
            a=int((pred & (y == 1)).sum()), b=int((~pred & (y == 1)).sum()),
            c_fp=int((pred & (y == 0)).sum()), d=int((~pred & (y == 0)).sum()))
        results[name] = (conf, metrics_from_confusion(conf, rank_auc(y, s)))
    return results
