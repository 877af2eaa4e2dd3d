"""Positive-unlabeled learning over the tree ensemble.

Only a fraction c of true positives ever gets labeled, so a classifier g
trained to separate labeled from unlabeled examples estimates p(s=1|x), not
p(y=1|x). When labeling is independent of the features given the class
(selected completely at random), the two are linked by p(y=1|x) = g(x)/c,
which is the classic corrector. The weighted variant instead retrains on an
expanded sample where every unlabeled example appears twice, once as a
positive with weight w(x) = p(y=1|x, s=0) and once as a negative with weight
1 - w(x).

c itself is estimated as the mean of g over positives held out of g's
training set: on held-out positives g(x) approximates p(s=1|y=1) = c.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import forest
from .errors import (DegenerateG, EmptyHoldout, InsufficientPositives,
                     TooFewSamples)
from .forest import ForestParams, TreeEnsemble

C_HAT_FLOOR = 1e-3
HOLDOUT_FRACTION = 0.2
MIN_POSITIVES = 10
MIN_UNLABELED = 10
_G_CEILING = 1.0 - 1e-9


class PUMode(enum.Enum):
    CLASSIC = "classic"
    WEIGHTED = "weighted"


class Classification(enum.Enum):
    UNRELATED = "Unrelated"
    NOT_FLAGGED = "NotFlagged"


@dataclass(frozen=True)
class PUModel:
    base: TreeEnsemble
    c_hat: float
    mode: PUMode
    threshold: float = 0.5
    stage2: Optional[TreeEnsemble] = None
    retained_features: Optional[tuple[str, ...]] = None
    # fraction of the positive pool the base trained on; scores are mapped
    # through the dilution inverse g/(f + (1-f)g) so they estimate p(s=1|x)
    # of the full population
    positive_fraction: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.c_hat <= 1.0):
            raise ValueError(f"c_hat must lie in (0, 1], got {self.c_hat}")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not (0.0 < self.positive_fraction <= 1.0):
            raise ValueError(
                f"positive_fraction must lie in (0, 1], got {self.positive_fraction}"
            )
        if self.mode is PUMode.WEIGHTED and self.stage2 is None:
            raise ValueError("weighted mode requires the second-stage ensemble")

    def labeled_probability(self, x):
        """p(s=1|x): the base score with the dilution inverse applied."""
        g = self.base.predict_proba(x)
        f = self.positive_fraction
        if f == 1.0:
            return g
        if np.ndim(g):
            return np.asarray(g) / (f + (1.0 - f) * np.asarray(g))
        return g / (f + (1.0 - f) * g)

    def to_dict(self) -> dict:
        return {
            "format": "buildtriage-pu",
            "version": 1,
            "mode": self.mode.value,
            "c_hat": self.c_hat,
            "threshold": self.threshold,
            "positive_fraction": self.positive_fraction,
            "retained_features": (
                list(self.retained_features) if self.retained_features else None
            ),
            "base": self.base.to_dict(),
            "stage2": self.stage2.to_dict() if self.stage2 else None,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PUModel":
        if obj.get("format") != "buildtriage-pu":
            raise ValueError("not a serialized positive-unlabeled model")
        if obj.get("version") != 1:
            raise ValueError(f"unsupported model version {obj.get('version')!r}")
        retained = obj.get("retained_features")
        return cls(
            base=TreeEnsemble.from_dict(obj["base"]),
            c_hat=float(obj["c_hat"]),
            mode=PUMode(obj["mode"]),
            threshold=float(obj["threshold"]),
            stage2=TreeEnsemble.from_dict(obj["stage2"]) if obj.get("stage2") else None,
            retained_features=tuple(retained) if retained else None,
            positive_fraction=float(obj.get("positive_fraction", 1.0)),
        )


def estimate_c(base, holdout_positives, positive_fraction: float = 1.0) -> float:
    """Mean score over positives the base never trained on, clipped away
    from zero so the classic division stays finite.

    When the base saw only a fraction f of the positive pool against the
    full unlabeled pool, every score is diluted from the true labeled
    probability q to f*q / (1 - (1-f)*q). Passing that fraction applies the
    exact inverse, g / (f + (1-f)*g), before averaging; otherwise the
    estimate is biased low by the held-out positive mass.
    """
    if not (0.0 < positive_fraction <= 1.0):
        raise ValueError(
            f"positive_fraction must lie in (0, 1], got {positive_fraction}"
        )
    H = np.asarray(holdout_positives, dtype=np.float64)
    if H.size == 0:
        raise EmptyHoldout("need at least one held-out positive to estimate c")
    g = np.atleast_1d(np.asarray(base.predict_proba(H), dtype=np.float64))
    f = positive_fraction
    q = g / (f + (1.0 - f) * g)
    return float(np.clip(q.mean(), C_HAT_FLOOR, 1.0))


def _split_positives(P: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    # canonical row order first so the split ignores input shuffling
    order = np.lexsort(tuple(P[:, j] for j in range(P.shape[1] - 1, -1, -1)))
    Pc = P[order]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    perm = rng.permutation(Pc.shape[0])
    n_hold = max(1, int(round(HOLDOUT_FRACTION * Pc.shape[0])))
    return Pc[perm[n_hold:]], Pc[perm[:n_hold]]


def _fit_stage1(P, U, params: ForestParams) -> tuple[TreeEnsemble, float, float]:
    P = np.asarray(P, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if P.ndim != 2 or U.ndim != 2:
        raise ValueError("positive and unlabeled sets must be 2-dimensional")
    if P.shape[0] < MIN_POSITIVES:
        raise InsufficientPositives(
            f"need at least {MIN_POSITIVES} labeled positives, got {P.shape[0]}"
        )
    if U.shape[0] < MIN_UNLABELED:
        raise TooFewSamples(
            f"need at least {MIN_UNLABELED} unlabeled examples, got {U.shape[0]}"
        )
    P_train, P_hold = _split_positives(P, params.rng_seed)
    X = np.vstack([P_train, U])
    y = np.r_[np.ones(P_train.shape[0]), np.zeros(U.shape[0])]
    base = forest.fit(X, y, params=params)
    fraction = P_train.shape[0] / P.shape[0]
    return base, estimate_c(base, P_hold, positive_fraction=fraction), fraction


def fit_classic(P, U, params: Optional[ForestParams] = None,
                threshold: float = 0.5,
                retained_features: Optional[tuple[str, ...]] = None) -> PUModel:
    """Labeled-vs-unlabeled base learner plus the g/c correction."""
    params = params or ForestParams()
    base, c_hat, fraction = _fit_stage1(P, U, params)
    return PUModel(base=base, c_hat=c_hat, mode=PUMode.CLASSIC,
                   threshold=threshold, retained_features=retained_features,
                   positive_fraction=fraction)


def predict_classic(model: PUModel, x):
    """min(1, g(x)/c); scalar in, scalar out."""
    if model.mode is not PUMode.CLASSIC:
        raise ValueError("predict_classic requires a classic-mode model")
    g = model.labeled_probability(x)
    return np.minimum(1.0, np.asarray(g) / model.c_hat) if np.ndim(g) else min(
        1.0, g / model.c_hat
    )


def compute_weight(g_x: float, c_hat: float) -> float:
    """Positive-class weight of an unlabeled example.

    w = ((1-c)/c) * (g/(1-g)), clipped to [0, 1] because it estimates the
    probability p(y=1 | x, s=0). Scores numerically at 1 make the odds blow
    up, so those are rejected here; the fitting path treats them as certain
    positives instead.
    """
    if not (0.0 < c_hat <= 1.0):
        raise ValueError(f"c_hat must lie in (0, 1], got {c_hat}")
    if g_x < 0.0:
        raise ValueError(f"g_x must be a probability, got {g_x}")
    if g_x >= _G_CEILING:
        raise DegenerateG(f"score {g_x} leaves no unlabeled mass to reweight")
    # products before the division so w(c, c) is exactly 1.0
    w = ((1.0 - c_hat) * g_x) / (c_hat * (1.0 - g_x))
    return max(0.0, min(1.0, w))


def weighted_expansion(P, U, g_u, c_hat) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Training triple for the second stage.

    P keeps label 1 at weight 1; each unlabeled row appears once as label 1
    with weight w and once as label 0 with weight 1-w. Scores at the
    degenerate ceiling collapse to w=1, their negative copy weightless.
    """
    P = np.asarray(P, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    g = np.minimum(np.asarray(g_u, dtype=np.float64), _G_CEILING)
    w = np.clip(((1.0 - c_hat) * g) / (c_hat * (1.0 - g)), 0.0, 1.0)
    X2 = np.vstack([P, U, U])
    y2 = np.r_[np.ones(P.shape[0]), np.ones(U.shape[0]), np.zeros(U.shape[0])]
    w2 = np.r_[np.ones(P.shape[0]), w, 1.0 - w]
    return X2, y2, w2


def fit_weighted(P, U, params: Optional[ForestParams] = None,
                 threshold: float = 0.5,
                 retained_features: Optional[tuple[str, ...]] = None) -> PUModel:
    """Two-stage fit: stage 1 scores the unlabeled pool, stage 2 retrains
    on the weighted expansion."""
    params = params or ForestParams()
    base, c_hat, fraction = _fit_stage1(P, U, params)
    U = np.asarray(U, dtype=np.float64)
    probe = PUModel(base=base, c_hat=c_hat, mode=PUMode.CLASSIC,
                    positive_fraction=fraction)
    g_u = np.atleast_1d(probe.labeled_probability(U))
    X2, y2, w2 = weighted_expansion(P, U, g_u, c_hat)
    stage2 = forest.fit(X2, y2, w2, params=params)
    return PUModel(base=base, c_hat=c_hat, mode=PUMode.WEIGHTED,
                   threshold=threshold, stage2=stage2,
                   retained_features=retained_features,
                   positive_fraction=fraction)


def predict(model: PUModel, x):
    """Corrected positive probability under either mode."""
    if model.mode is PUMode.CLASSIC:
        return predict_classic(model, x)
    return model.stage2.predict_proba(x)


def classify(model: PUModel, x):
    """Unrelated iff the corrected probability reaches the threshold."""
    p = predict(model, x)
    if np.ndim(p):
        return [
            Classification.UNRELATED if v >= model.threshold else Classification.NOT_FLAGGED
            for v in np.asarray(p)
        ]
    return (
        Classification.UNRELATED if p >= model.threshold else Classification.NOT_FLAGGED
    )
