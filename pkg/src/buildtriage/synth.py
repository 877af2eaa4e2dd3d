"""Synthetic positive-unlabeled datasets with an exact posterior oracle.

Draws two Gaussian classes with unit covariance whose means sit at
+-(separation/2) along the first axis, labels y by a Bernoulli(pi) coin, and
then reveals a subset of positives as s=1. With labeling_bias=0 each positive
is revealed with the same probability c_true regardless of its features (the
selected-completely-at-random case); with bias>0 the reveal probability is
proportional to sigmoid(bias * x1), rescaled so its mean over positives is
still c_true, which produces feature-dependent labeling for negative
controls.

Because only the first coordinate separates the classes, the true posterior
has the closed form p(y=1|x) = sigmoid(logit(pi) + separation * x1), exposed
as oracle_posterior so estimator output can be checked against ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import BadSpec


@dataclass(frozen=True)
class GeneratorSpec:
    n: int
    pi: float
    c_true: float
    dim: int = 2
    separation: float = 2.0
    labeling_bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise BadSpec(f"n must be >= 1, got {self.n}")
        if not (0.0 < self.pi < 1.0):
            raise BadSpec(f"pi must lie in (0, 1), got {self.pi}")
        if not (0.0 < self.c_true <= 1.0):
            raise BadSpec(f"c_true must lie in (0, 1], got {self.c_true}")
        if self.dim < 1:
            raise BadSpec(f"dim must be >= 1, got {self.dim}")
        if self.separation < 0.0:
            raise BadSpec(f"separation must be >= 0, got {self.separation}")
        if self.labeling_bias < 0.0:
            raise BadSpec(f"labeling_bias must be >= 0, got {self.labeling_bias}")


def generate(spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (features, y_true, s_observed) as float64/int8/int8 arrays."""
    rng = np.random.default_rng(spec.seed)
    y = (rng.random(spec.n) < spec.pi).astype(np.int8)
    X = rng.standard_normal((spec.n, spec.dim))
    half = spec.separation / 2.0
    X[:, 0] += np.where(y == 1, half, -half)

    s = np.zeros(spec.n, dtype=np.int8)
    pos = np.nonzero(y == 1)[0]
    if pos.size:
        if spec.labeling_bias == 0.0:
            reveal = np.full(pos.size, spec.c_true)
        else:
            raw = expit(spec.labeling_bias * X[pos, 0])
            reveal = np.clip(spec.c_true * raw / raw.mean(), 0.0, 1.0)
        s[pos] = (rng.random(pos.size) < reveal).astype(np.int8)
    return X, y, s


def oracle_posterior(spec: GeneratorSpec, x) -> np.ndarray:
    """Exact p(y=1 | x) for the generator's Gaussian mixture.

    Accepts one point (1-D) or a matrix of points; only the first coordinate
    matters because the class means differ in that axis alone.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    x1 = arr[:, 0]
    post = expit(logit(spec.pi) + spec.separation * x1)
    return float(post[0]) if single else post
