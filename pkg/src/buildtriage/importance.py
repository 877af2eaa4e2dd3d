"""Permutation feature importance for fitted unrelated-failure models.

Importance of a feature is the drop in a performance metric when that
feature's column is shuffled on held-out rows: a feature the model relies on
loses its information under shuffling, a feature the model ignores changes
nothing. Values are kept signed; a negative importance is a meaningful
signal that shuffling happened to help, which only noise features produce.
Per-fold values are aggregated as medians and ranked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import pu
from .errors import LengthMismatch
from .evaluation import PQNSplit, _fold_chunks, _normalize_kind, rank_auc
from .forest import ForestParams

METRICS = ("recall", "f1", "auc")
DEFAULT_REPEATS = 5


@dataclass(frozen=True)
class ImportanceReport:
    feature_names: tuple[str, ...]
    per_fold: tuple[tuple[float, ...], ...]
    median: tuple[float, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]
    rank: tuple[int, ...]
    metric_used: str

    def __post_init__(self):
        n = len(self.feature_names)
        for name in ("per_fold", "median", "mean", "std", "rank"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have one entry per feature")
        if sorted(self.rank) != list(range(1, n + 1)):
            raise ValueError("ranks must be a permutation of 1..n_features")

    def to_dict(self) -> dict:
        rows = []
        for i in np.argsort(self.rank):
            rows.append({
                "feature": self.feature_names[i],
                "rank": self.rank[i],
                "median": self.median[i],
                "mean": self.mean[i],
                "std": self.std[i],
                "per_fold": list(self.per_fold[i]),
            })
        return {"metric": self.metric_used, "features": rows}


def _metric_value(metric: str, labels: np.ndarray, scores: np.ndarray,
                  threshold: float) -> float:
    if metric == "auc":
        return rank_auc(labels, scores)
    pred = scores >= threshold
    pos = labels == 1
    tp = int((pred & pos).sum())
    fn = int((~pred & pos).sum())
    fp = int((pred & ~pos).sum())
    recall = tp / (tp + fn) if tp + fn else 0.0
    if metric == "recall":
        return recall
    precision = tp / (tp + fp) if tp + fp else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def permutation_importance(model: pu.PUModel, eval_rows, labels,
                           metric: str = "f1",
                           n_repeats: int = DEFAULT_REPEATS,
                           seed: int = 0) -> np.ndarray:
    """Per-feature metric drop under column shuffling, baseline minus the
    mean over ``n_repeats`` shuffles. Shuffling a constant column is the
    identity, so its importance is exactly zero.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    X = np.asarray(eval_rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if X.ndim != 2:
        raise ValueError("eval_rows must be a 2-D matrix")
    if X.shape[0] != y.shape[0]:
        raise LengthMismatch(
            f"eval_rows has {X.shape[0]} rows but labels has {y.shape[0]}"
        )

    base_scores = np.atleast_1d(pu.predict(model, X))
    baseline = _metric_value(metric, y, base_scores, model.threshold)

    n = X.shape[0]
    out = np.empty(X.shape[1], dtype=np.float64)
    ss = np.random.SeedSequence([int(seed), 9])
    for j, child in enumerate(ss.spawn(X.shape[1])):
        rng = np.random.default_rng(child)
        drops = []
        for _ in range(n_repeats):
            perm = rng.permutation(n)
            Xs = X.copy()
            Xs[:, j] = X[perm, j]
            scores = np.atleast_1d(pu.predict(model, Xs))
            drops.append(baseline - _metric_value(metric, y, scores,
                                                  model.threshold))
        out[j] = float(np.mean(drops))
    return out


def aggregate_importance(per_fold_values, feature_names: Sequence[str],
                         metric_used: str = "f1") -> ImportanceReport:
    """Median/mean/std across folds plus a descending-median ranking.

    ``per_fold_values`` is folds x features; ties in median rank break
    lexicographically by feature name.
    """
    names = tuple(str(n) for n in feature_names)
    arr = np.asarray(per_fold_values, dtype=np.float64)
    if arr.ndim != 2:
        raise LengthMismatch("per-fold values must be a folds x features matrix")
    if arr.shape[1] != len(names):
        raise LengthMismatch(
            f"got {arr.shape[1]} feature columns but {len(names)} names"
        )
    med = np.median(arr, axis=0)
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    order = sorted(range(len(names)), key=lambda i: (-med[i], names[i]))
    rank = [0] * len(names)
    for pos, i in enumerate(order):
        rank[i] = pos + 1
    return ImportanceReport(
        feature_names=names,
        per_fold=tuple(tuple(float(v) for v in arr[:, i]) for i in range(len(names))),
        median=tuple(float(v) for v in med),
        mean=tuple(float(v) for v in mean),
        std=tuple(float(v) for v in std),
        rank=tuple(rank),
        metric_used=metric_used,
    )


def cv_importance(split: PQNSplit, model_kind, feature_names: Sequence[str],
                  metric: str = "f1", folds: int = 10, seed: int = 0,
                  params: Optional[ForestParams] = None,
                  threshold: float = 0.5,
                  n_repeats: int = DEFAULT_REPEATS) -> ImportanceReport:
    """Per-fold permutation importance on each fold's held-out rows.

    Fold assignment and per-fold model seeds match the evaluation
    cross-validation for the same seed, so importance rows are scored by the
    same models whose metrics the evaluation reports.
    """
    kind = _normalize_kind(model_kind)
    params = params or ForestParams()
    names = tuple(str(n) for n in feature_names)
    if split.n_features != len(names):
        raise LengthMismatch(
            f"split has {split.n_features} feature columns but {len(names)} names"
        )
    ss = np.random.SeedSequence([int(seed), 2])
    rng = np.random.default_rng(ss)
    chunks_p = _fold_chunks(split.P.shape[0], folds, rng)
    chunks_q = _fold_chunks(split.Q.shape[0], folds, rng)
    chunks_n = _fold_chunks(split.N.shape[0], folds, rng)
    fold_seeds = [int(c.generate_state(1, np.uint64)[0] >> 1)
                  for c in ss.spawn(folds)]

    rows = []
    for i in range(folds):
        p_test, q_test, n_test = chunks_p[i], chunks_q[i], chunks_n[i]
        p_train = np.setdiff1d(np.arange(split.P.shape[0]), p_test)
        q_train = np.setdiff1d(np.arange(split.Q.shape[0]), q_test)
        n_train = np.setdiff1d(np.arange(split.N.shape[0]), n_test)
        fold_params = ForestParams(
            n_trees=params.n_trees, max_depth=params.max_depth,
            min_leaf_weight=params.min_leaf_weight,
            feature_subsample=params.feature_subsample,
            rng_seed=fold_seeds[i])
        P_tr = split.P[p_train]
        U_tr = np.vstack([split.Q[q_train], split.N[n_train]])
        if kind is pu.PUMode.CLASSIC:
            model = pu.fit_classic(P_tr, U_tr, params=fold_params,
                                   threshold=threshold)
        else:
            model = pu.fit_weighted(P_tr, U_tr, params=fold_params,
                                    threshold=threshold)
        X_eval = np.vstack([split.P[p_test], split.Q[q_test],
                            split.N[n_test]])
        y_eval = np.r_[np.ones(p_test.shape[0] + q_test.shape[0]),
                       np.zeros(n_test.shape[0])]
        rows.append(permutation_importance(model, X_eval, y_eval,
                                           metric=metric,
                                           n_repeats=n_repeats,
                                           seed=fold_seeds[i]))
    return aggregate_importance(np.vstack(rows), names, metric_used=metric)
