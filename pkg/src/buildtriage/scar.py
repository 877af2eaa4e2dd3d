"""Bootstrap test of the selected-completely-at-random labeling assumption.

The assumption under test: labeled positives are an unbiased sample of all
positives. The procedure trains a scorer on the labeled set against a random
half of the unlabeled pool, scores the other half, and takes the top slice
(sized by the positive share of the unlabeled pool) as the estimated
positives. If labeling ignores the features, the labeled set and that slice
are two draws from the same population, so a discriminator between them
should sit near chance. The null distribution makes "near chance" precise:
each of B replicates re-marks members of the pooled estimated-positive set
(labeled union slice) as "labeled" with the empirical label frequency and
records the AUC of a discriminator between the marked rows and the rest.
The p-value is the +1-smoothed fraction of null statistics at or above the
observed one, so it can never be exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import forest, pu
from .errors import TooFewSamples
from .evaluation import rank_auc
from .forest import ForestParams

DEFAULT_B = 1000
DEFAULT_ALPHA = 0.05
# half the unlabeled pool trains the scorer, the other half gets scored
SUBSET_FRACTION = 0.5
# the observed statistic averages this many independent split/draw passes;
# a single pass would carry the variance of one split and one draw, which
# the relabeling replicates do not have
OBSERVED_PASSES = 7
MIN_ROWS = 20

_DISCRIMINATOR_PARAMS = dict(n_trees=15, max_depth=5)
# the scorer fits once per test, so it can afford to be larger than the
# discriminator, which fits once per null replicate
_SCORER_PARAMS = dict(n_trees=60, max_depth=8)
_PI_MODEL_PARAMS = dict(n_trees=50, max_depth=10)
_CV_FOLDS = 5


@dataclass(frozen=True)
class ScarTestResult:
    statistic: float
    p_value: float
    B: int
    pi_hat: float
    c_hat_emp: float
    null_distribution: tuple[float, ...]
    alpha: float
    reject: bool
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.null_distribution) != self.B:
            raise ValueError("null distribution must have exactly B entries")
        if not (0.0 <= self.pi_hat <= 1.0):
            raise ValueError(f"pi_hat must lie in [0, 1], got {self.pi_hat}")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "B": self.B,
            "pi_hat": self.pi_hat,
            "c_hat_emp": self.c_hat_emp,
            "alpha": self.alpha,
            "reject": self.reject,
            "metadata": dict(self.metadata),
            "null_distribution": list(self.null_distribution),
        }


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def discriminator_auc(setA, setB, seed: int,
                      params: Optional[ForestParams] = None) -> float:
    """Cross-validated separability of two samples; 0.5 means alike.

    Five folds with pooled out-of-fold scores. Rows sharing one feature
    vector always land in the same fold: splitting such twins across folds
    would let each copy's label leak into the other's training set and drag
    the statistic below chance on identical samples. When one class has no
    two distinct vectors to spread over folds, a single in-sample fit scores
    everything instead.
    """
    A = np.asarray(setA, dtype=np.float64)
    Bm = np.asarray(setB, dtype=np.float64)
    if A.shape[0] < 2 or Bm.shape[0] < 2:
        raise TooFewSamples(
            f"discriminator needs >= 2 rows per side, got {A.shape[0]} and {Bm.shape[0]}"
        )
    X = np.vstack([A, Bm])
    y = np.r_[np.ones(A.shape[0]), np.zeros(Bm.shape[0])]
    n = X.shape[0]
    ss = np.random.SeedSequence([int(seed), 6])
    rng = np.random.default_rng(ss)
    base = params or ForestParams(**_DISCRIMINATOR_PARAMS)

    _, group = np.unique(X, axis=0, return_inverse=True)
    n_groups = int(group.max()) + 1
    has_pos = np.zeros(n_groups, dtype=bool)
    has_neg = np.zeros(n_groups, dtype=bool)
    np.logical_or.at(has_pos, group, y == 1.0)
    np.logical_or.at(has_neg, group, y == 0.0)

    if int(has_pos.sum()) < 2 or int(has_neg.sum()) < 2:
        fp = ForestParams(n_trees=base.n_trees, max_depth=base.max_depth,
                          min_leaf_weight=base.min_leaf_weight,
                          feature_subsample=base.feature_subsample,
                          rng_seed=_seed_int(ss))
        model = forest.fit(X, y, params=fp)
        return rank_auc(y, np.atleast_1d(model.predict_proba(X)))

    # class-bearing groups go first in round-robin order so no training
    # fold can lose an entire class
    order = rng.permutation(n_groups)
    order = np.concatenate([order[has_pos[order]], order[~has_pos[order]]])
    slot = np.empty(n_groups, dtype=np.int64)
    slot[order] = np.arange(n_groups) % _CV_FOLDS
    fold = slot[group]
    fold_seeds = [_seed_int(c) for c in ss.spawn(_CV_FOLDS)]

    for f in range(_CV_FOLDS):
        test = fold == f
        if test.any() and (np.all(y[~test] == 1.0) or np.all(y[~test] == 0.0)):
            fp = ForestParams(n_trees=base.n_trees, max_depth=base.max_depth,
                              min_leaf_weight=base.min_leaf_weight,
                              feature_subsample=base.feature_subsample,
                              rng_seed=_seed_int(ss))
            model = forest.fit(X, y, params=fp)
            return rank_auc(y, np.atleast_1d(model.predict_proba(X)))

    scores = np.empty(n, dtype=np.float64)
    for f in range(_CV_FOLDS):
        test = fold == f
        if not test.any():
            continue
        train = ~test
        fp = ForestParams(n_trees=base.n_trees, max_depth=base.max_depth,
                          min_leaf_weight=base.min_leaf_weight,
                          feature_subsample=base.feature_subsample,
                          rng_seed=fold_seeds[f])
        model = forest.fit(X[train], y[train], params=fp)
        scores[test] = np.atleast_1d(model.predict_proba(X[test]))
    return rank_auc(y, scores)


def _canonical(X: np.ndarray) -> np.ndarray:
    return np.lexsort(tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1)))


def _score_and_select(P: np.ndarray, U: np.ndarray, pi: float,
                      ss_split: np.random.SeedSequence) -> tuple:
    """Split U, score the held-out half against P, return the indices (into
    U) of a score-weighted draw sized ceil(pi * scored pool).

    ``pi`` is the positive share of the unlabeled pool, so the draw size
    matches the number of positives expected to be hiding in the scored
    half. Oversizing it would pad the draw with sure negatives and make
    the labeled set separable from it no matter how the labels were chosen.
    The draw samples without replacement with probability proportional to
    score rather than cutting at the top: a hard cut would chop off the
    low-confidence tail that genuine positive samples always carry, leaving
    the slice separable from the labeled set even under random labeling.
    """
    rng = np.random.default_rng(ss_split)
    perm = rng.permutation(U.shape[0])
    n_train = int(round(SUBSET_FRACTION * U.shape[0]))
    n_train = min(max(n_train, 1), U.shape[0] - 2)
    train_idx = perm[:n_train]
    scored_idx = perm[n_train:]

    scorer = forest.fit(
        np.vstack([P, U[train_idx]]),
        np.r_[np.ones(P.shape[0]), np.zeros(train_idx.shape[0])],
        params=ForestParams(rng_seed=_seed_int(ss_split),
                            **_SCORER_PARAMS))
    scores = np.atleast_1d(scorer.predict_proba(U[scored_idx]))

    k = math.ceil(pi * scored_idx.shape[0])
    k = min(max(k, 2), scored_idx.shape[0])
    # weighted sampling without replacement: top-k of u^(1/w) keys
    w = scores if float(scores.sum()) > 0.0 else np.ones_like(scores)
    u = rng.random(scores.shape[0])
    keys = np.where(w > 0.0, u ** (1.0 / np.maximum(w, 1e-300)), -1.0)
    top = np.lexsort((np.arange(keys.shape[0]), -keys))[:k]
    return k, np.sort(scored_idx[top])


def _estimate_pi(P: np.ndarray, U: np.ndarray, seed: int) -> float:
    """Positive share of the unlabeled pool, via the label-frequency route.

    With labeled share lam = |P| / (|P| + |U|) and estimated label
    frequency c, the overall prior is lam / c and the share of positives
    among the unlabeled rows is lam * (1 - c) / (c * (1 - lam)).
    """
    model = pu.fit_classic(P, U, params=ForestParams(rng_seed=seed,
                                                     **_PI_MODEL_PARAMS))
    lam = P.shape[0] / (P.shape[0] + U.shape[0])
    c = model.c_hat
    return float(min(1.0, lam * (1.0 - c) / (c * (1.0 - lam))))


def scar_test(P, U, B: int = DEFAULT_B, alpha: float = DEFAULT_ALPHA,
              seed: int = 0, pi_hat: Optional[float] = None,
              q_mask=None) -> ScarTestResult:
    """Test whether labeling looks independent of the features.

    ``pi_hat`` is the positive share of the unlabeled pool. It comes from
    the first available source: the caller's value, the fraction of
    confirmed positives in the unlabeled pool (``q_mask``), or an estimate
    from the label-frequency route.
    Rows are put in a canonical order first, so the p-value depends only on
    the seed and the set contents, not on row order.
    """
    P = np.asarray(P, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if P.shape[0] < MIN_ROWS or U.shape[0] < MIN_ROWS:
        raise TooFewSamples(
            f"need >= {MIN_ROWS} rows in each of P and U, got {P.shape[0]} and {U.shape[0]}"
        )
    if B < 1:
        raise ValueError("B must be >= 1")
    P = P[_canonical(P)]
    u_order = _canonical(U)
    U = U[u_order]
    if q_mask is not None:
        q_mask = np.asarray(q_mask, dtype=bool).reshape(-1)
        if q_mask.shape[0] != U.shape[0]:
            raise ValueError("q_mask must align with U rows")
        q_mask = q_mask[u_order]

    ss = np.random.SeedSequence([int(seed), 7])
    ss_pass, ss_pi, ss_null = ss.spawn(3)

    if pi_hat is not None:
        pi_source = "caller"
        pi = float(pi_hat)
    elif q_mask is not None:
        pi_source = "q_ratio"
        pi = float(q_mask.mean())
    else:
        pi_source = "estimated"
        pi = _estimate_pi(P, U, _seed_int(ss_pi))
    if not (0.0 <= pi <= 1.0):
        raise ValueError(f"pi_hat must lie in [0, 1], got {pi}")

    pass_stats = []
    k0, ep0 = 0, None
    for i, ps in enumerate(ss_pass.spawn(OBSERVED_PASSES)):
        ps_split, ps_disc = ps.spawn(2)
        k_i, ep_i = _score_and_select(P, U, pi, ps_split)
        if i == 0:
            k0, ep0 = k_i, ep_i
        pass_stats.append(discriminator_auc(P, U[ep_i], _seed_int(ps_disc)))
    observed = float(np.mean(pass_stats))
    c_hat_emp = P.shape[0] / (P.shape[0] + k0)
    est_pos = np.vstack([P, U[ep0]])
    n_est = est_pos.shape[0]

    null = []
    for child in ss_null.spawn(B):
        cs_mark, cs_disc = child.spawn(2)
        mark_rng = np.random.default_rng(cs_mark)
        while True:
            mark = mark_rng.random(n_est) < c_hat_emp
            m = int(mark.sum())
            if 2 <= m <= n_est - 2:
                break
        null.append(discriminator_auc(est_pos[mark], est_pos[~mark],
                                      _seed_int(cs_disc)))
    null_arr = np.asarray(null)
    p_value = (1.0 + float((null_arr >= observed).sum())) / (B + 1.0)

    return ScarTestResult(
        statistic=float(observed), p_value=float(p_value), B=B,
        pi_hat=float(pi), c_hat_emp=float(c_hat_emp),
        null_distribution=tuple(float(v) for v in null),
        alpha=float(alpha), reject=bool(p_value <= alpha),
        metadata={
            "pi_source": pi_source,
            "estimated_positive_rule": "top scores, count ceil(pi_hat * scored pool)",
            "null_rule": "relabel within the pooled estimated positives at "
                         "the empirical label frequency, discriminate marked "
                         "rows from the rest",
            "p_value_smoothing": "+1",
            "observed_rule": f"mean AUC over {OBSERVED_PASSES} independent "
                             "split/draw passes",
            "discriminator": f"{_CV_FOLDS}-fold pooled rank AUC, "
                             f"{_DISCRIMINATOR_PARAMS['n_trees']} trees depth "
                             f"{_DISCRIMINATOR_PARAMS['max_depth']}",
            "subset_fraction": SUBSET_FRACTION,
        })
