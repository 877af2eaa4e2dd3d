"""Randomized tree ensemble with per-sample weights and probability output.

The ensemble estimates p(label=1 | x) as the mean leaf positive-fraction
across trees (raw fractions, no extra calibration step; the PU layer's
c-division is the calibration adjustment).

Determinism: given the same rows (in any order) and the same rng_seed, fit
produces the same ensemble. Rows are first put into a canonical order (sorted
by feature values, then label, then weight), so training is invariant to row
permutation by construction. A weighted bootstrap then draws
max(1, round(total_weight)) rows per tree by inverse CDF over the cumulative
weights: a row of weight 0 occupies an empty interval and can never be drawn,
which makes zero weight exactly equivalent to deletion, and duplicating a row
while halving its weight leaves the drawn multiset unchanged.

Tree growth runs through one of two interchangeable kernels: a compiled
Cython module (fast) and a pure-numpy twin. They implement the identical
algorithm and return bit-identical trees; BUILDTRIAGE_FOREST_BACKEND=python
or =cython forces the choice, otherwise the compiled kernel is used when the
build produced it.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DegenerateLabels, FeatureMismatch

_FORCED = os.environ.get("BUILDTRIAGE_FOREST_BACKEND")

if _FORCED == "python":
    from . import _grow_py as _kernel

    BACKEND = "python"
elif _FORCED in (None, "", "cython"):
    try:
        from . import _grow_cy as _kernel  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _FORCED == "cython":
            raise
        from . import _grow_py as _kernel

        BACKEND = "python"
else:
    raise ValueError(
        f"BUILDTRIAGE_FOREST_BACKEND must be 'cython' or 'python', got {_FORCED!r}"
    )


def backend_name() -> str:
    """Which tree-growth kernel this process is using."""
    return BACKEND


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf_weight: float = 2.0
    # fraction of features considered per split; None means sqrt(p)/p
    feature_subsample: Optional[float] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_leaf_weight <= 0:
            raise ValueError("min_leaf_weight must be > 0")
        if self.feature_subsample is not None and not (0 < self.feature_subsample <= 1):
            raise ValueError("feature_subsample must lie in (0, 1]")

    def k_features(self, p: int) -> int:
        if self.feature_subsample is None:
            return max(1, min(p, int(round(math.sqrt(p)))))
        return max(1, min(p, int(round(self.feature_subsample * p))))


@dataclass(frozen=True)
class _Tree:
    feature: np.ndarray    # int32, -1 marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64, positive fraction of the node

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                break
            rows = np.nonzero(active)[0]
            cur = node[rows]
            go_left = X[rows, f[rows]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]


@dataclass(frozen=True)
class TreeEnsemble:
    params: ForestParams
    n_features: int
    trees: tuple[_Tree, ...]

    def predict_proba(self, X) -> np.ndarray:
        """Mean leaf positive-fraction across trees; always within [0, 1].

        Accepts one row (1-D) or a matrix; returns a scalar for one row.
        """
        arr = np.asarray(X, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.n_features:
            raise FeatureMismatch(
                f"expected {self.n_features} features, got shape {np.asarray(X).shape}"
            )
        total = np.zeros(arr.shape[0], dtype=np.float64)
        for tree in self.trees:
            total += tree.predict(arr)
        out = total / len(self.trees)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {
            "format": "buildtriage-forest",
            "version": 1,
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "min_leaf_weight": self.params.min_leaf_weight,
                "feature_subsample": self.params.feature_subsample,
                "rng_seed": self.params.rng_seed,
            },
            "n_features": self.n_features,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeEnsemble":
        if obj.get("format") != "buildtriage-forest":
            raise ValueError("not a serialized tree ensemble")
        if obj.get("version") != 1:
            raise ValueError(f"unsupported ensemble version {obj.get('version')!r}")
        params = ForestParams(**obj["params"])
        trees = tuple(
            _Tree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                value=np.asarray(t["value"], dtype=np.float64),
            )
            for t in obj["trees"]
        )
        return cls(params=params, n_features=obj["n_features"], trees=trees)


def _canonical_order(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    keys = (w, y) + tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1))
    return np.lexsort(keys)


def fit(matrix, labels, weights=None, params: Optional[ForestParams] = None,
        grow=None) -> TreeEnsemble:
    """Fit the ensemble on a weighted sample.

    labels must contain both classes with positive total weight;
    weights default to 1. ``grow`` overrides the tree-growth kernel
    (used by the backend benchmark and agreement tests).
    """
    params = params or ForestParams()
    X = np.ascontiguousarray(matrix, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("matrix must be 2-dimensional")
    n, p = X.shape
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if weights is None:
        w = np.ones(n, dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if y.shape[0] != n or w.shape[0] != n:
        raise ValueError("matrix, labels and weights must have equal lengths")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix must be finite")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary")
    pos_weight = float(w[y == 1.0].sum())
    neg_weight = float(w[y == 0.0].sum())
    if pos_weight <= 0.0 or neg_weight <= 0.0:
        raise DegenerateLabels(
            f"need positive weight in both classes, got {pos_weight} / {neg_weight}"
        )
    grow = grow or _kernel.grow_tree

    order = _canonical_order(X, y, w)
    Xc = np.ascontiguousarray(X[order])
    yc = y[order]
    wc = w[order]
    cumw = np.cumsum(wc)
    total = float(cumw[-1])
    m = max(1, int(round(total)))
    k = params.k_features(p)

    children = np.random.SeedSequence(params.rng_seed).spawn(params.n_trees)
    trees = []
    for child in children:
        rng = np.random.default_rng(child)
        u = rng.random(m) * total
        rows = np.searchsorted(cumw, u, side="right")
        rows = np.minimum(rows, n - 1)
        rows.sort()
        tree_seed = int(rng.integers(0, 1 << 64, dtype=np.uint64))
        Xb = np.ascontiguousarray(Xc[rows])
        yb = np.ascontiguousarray(yc[rows])
        feature, thr, left, right, value = grow(
            Xb, yb, params.max_depth, params.min_leaf_weight, k, tree_seed
        )
        trees.append(_Tree(feature=np.asarray(feature), threshold=np.asarray(thr),
                           left=np.asarray(left), right=np.asarray(right),
                           value=np.asarray(value)))
    return TreeEnsemble(params=params, n_features=p, trees=tuple(trees))


def predict_proba(model: TreeEnsemble, x) -> np.ndarray:
    """Functional alias of TreeEnsemble.predict_proba."""
    return model.predict_proba(x)
