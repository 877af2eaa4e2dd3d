"""Feature pruning: correlation clustering plus redundancy regression.

Two passes trim a feature matrix down to a non-collinear core. The first
clusters features whose Spearman rank correlation reaches 0.7 in absolute
value (single linkage on distance 1 - |rho|, so a cluster is a connected
component of the strong-correlation graph) and keeps one representative per
cluster. The second repeatedly regresses each surviving feature on all the
others and drops the one with the highest R-squared while any exceeds 0.9.

Representative choice is automated with a preference order: an explicit
priority list first, then simpler kinds win (booleans before counts before
durations), then the lexicographically first name. The same order breaks
R-squared ties in the redundancy pass, where the least preferred feature of
a tie is the one removed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, SingularDesign

# Paired metrics measure the same underlying signal; the earlier entry is the
# one kept when they land in the same correlation cluster.
DEFAULT_PRIORITY = (
    "num_similar_failures",
    "is_shared_same_emsg",
    "modified_source_files",
    "source_lines_added",
    "source_lines_deleted",
    "source_lines_modified",
    "has_source_code",
    "config_lines_added",
    "config_lines_deleted",
    "config_lines_modified",
    "has_config_files",
)

DEFAULT_RHO_THRESHOLD = 0.7
DEFAULT_R2_THRESHOLD = 0.9

# R-squared values this close are treated as tied so that exact linear
# dependences resolve by the preference order, not by rounding noise.
_R2_DECIMALS = 12


@dataclass(frozen=True)
class SelectionReport:
    retained: tuple[str, ...]
    removed: tuple[tuple[str, str], ...]  # (feature, reason)
    rho_matrix: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        names = set(self.feature_names)
        kept = set(self.retained)
        gone = {f for f, _ in self.removed}
        if kept & gone:
            raise ValueError("a feature cannot be both retained and removed")
        if kept | gone != names:
            raise ValueError("retained plus removed must cover every feature")

    def to_dict(self) -> dict:
        return {
            "retained": list(self.retained),
            "removed": [{"feature": f, "reason": r} for f, r in self.removed],
            "rho_matrix": {
                "features": list(self.feature_names),
                "values": [[float(v) for v in row] for row in self.rho_matrix],
            },
        }


def feature_kind(name: str) -> int:
    """0 for booleans, 1 for counts, 2 for durations (simpler sorts first)."""
    if name.startswith(("is_", "has_")) or name.endswith("_missing"):
        return 0
    if name.endswith("_hours"):
        return 2
    return 1


def _preference_key(name: str, priority: Sequence[str]):
    try:
        idx = priority.index(name)
    except ValueError:
        idx = len(priority)
    return (idx, feature_kind(name), name)


def spearman_rho(x, y) -> float:
    """Rank correlation with average ranks; 0 when either input is constant."""
    xa = np.asarray(x, dtype=np.float64).reshape(-1)
    ya = np.asarray(y, dtype=np.float64).reshape(-1)
    if xa.shape[0] != ya.shape[0] or xa.shape[0] < 2:
        raise LengthMismatch(
            f"need two equal-length vectors of size >= 2, got {xa.shape[0]} and {ya.shape[0]}"
        )
    rx = rankdata(xa)
    ry = rankdata(ya)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    sx = float(np.dot(rx, rx))
    sy = float(np.dot(ry, ry))
    if sx == 0.0 or sy == 0.0:
        return 0.0
    # one sqrt of the product keeps y=x at exactly 1.0
    rho = float(np.dot(rx, ry) / np.sqrt(sx * sy))
    return max(-1.0, min(1.0, rho))


def rho_matrix(matrix) -> np.ndarray:
    """Pairwise Spearman matrix; constant columns get 0 off the diagonal."""
    X = np.asarray(matrix, dtype=np.float64)
    n, p = X.shape
    R = np.empty_like(X)
    for j in range(p):
        R[:, j] = rankdata(X[:, j])
    R -= R.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", R, R))
    live = norms > 0.0
    scale = np.where(live, norms, 1.0)
    R /= scale
    M = R.T @ R
    M[~live, :] = 0.0
    M[:, ~live] = 0.0
    np.clip(M, -1.0, 1.0, out=M)
    np.fill_diagonal(M, 1.0)
    return M


def _clusters(rho: np.ndarray, threshold: float) -> list[list[int]]:
    # single-linkage groups cut at distance 1-threshold are exactly the
    # connected components of the |rho| >= threshold graph
    p = rho.shape[0]
    parent = list(range(p))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(p):
        for j in range(i + 1, p):
            if abs(rho[i, j]) >= threshold:
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for i in range(p):
        groups.setdefault(find(i), []).append(i)
    return [groups[r] for r in sorted(groups)]


def correlation_filter(matrix, feature_names: Sequence[str],
                       threshold: float = DEFAULT_RHO_THRESHOLD,
                       priority: Sequence[str] = DEFAULT_PRIORITY) -> SelectionReport:
    """Keep one feature per strong-correlation cluster.

    Constant columns carry no signal and are always removed, reported as
    correlated_with(constant).
    """
    X = np.asarray(matrix, dtype=np.float64)
    names = tuple(feature_names)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise LengthMismatch(
            f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns for {len(names)} names"
        )
    rho = rho_matrix(X)
    constant = [j for j in range(len(names)) if np.all(X[:, j] == X[0, j])] if X.shape[0] else []
    const_set = set(constant)

    survivor_of: dict[int, int] = {}
    for cluster in _clusters(rho, threshold):
        eligible = [j for j in cluster if j not in const_set]
        if not eligible:
            continue
        keep = min(eligible, key=lambda j: _preference_key(names[j], priority))
        for j in eligible:
            survivor_of[j] = keep

    retained = []
    removed = []
    for j, name in enumerate(names):
        if j in const_set:
            removed.append((name, "correlated_with(constant)"))
        elif survivor_of[j] == j:
            retained.append(name)
        else:
            removed.append((name, f"correlated_with({names[survivor_of[j]]})"))
    return SelectionReport(retained=tuple(retained), removed=tuple(removed),
                           rho_matrix=rho, feature_names=names)


def _full_r2(Z: np.ndarray, cols: list[int], live: np.ndarray, j: int) -> float:
    if not live[j]:
        return 0.0
    predictors = [k for k in cols if k != j and live[k]]
    if not predictors:
        return 0.0
    A = Z[:, predictors]
    target = Z[:, j]
    coef, _, rank, _ = np.linalg.lstsq(A, target, rcond=None)
    if rank >= Z.shape[0]:
        # predictors span the whole sample space, so any target fits
        # exactly and the full regression says nothing
        raise SingularDesign(
            f"rank {rank} design interpolates all {Z.shape[0]} samples"
        )
    resid = target - A @ coef
    ss_tot = float(np.dot(target, target))
    ss_res = float(np.dot(resid, resid))
    if ss_tot == 0.0:
        return 0.0
    return 1.0 - ss_res / ss_tot


def _pairwise_r2(Z: np.ndarray, cols: list[int], live: np.ndarray, j: int) -> float:
    if not live[j]:
        return 0.0
    n = Z.shape[0]
    best = 0.0
    zj = Z[:, j]
    for k in cols:
        if k == j or not live[k]:
            continue
        r = float(np.dot(zj, Z[:, k]) / n)
        best = max(best, r * r)
    return best


def redundancy_filter(matrix, feature_names: Sequence[str],
                      r2_threshold: float = DEFAULT_R2_THRESHOLD,
                      priority: Sequence[str] = DEFAULT_PRIORITY) -> SelectionReport:
    """Drop features a least-squares fit on the rest explains almost exactly.

    Columns are standardized, then each is regressed on all the others; while
    any R-squared exceeds the threshold the worst offender goes, least
    preferred first on ties. A rank-deficient design falls back to pairwise
    R-squared (the best single-predictor fit) for the whole run.
    """
    X = np.asarray(matrix, dtype=np.float64)
    names = tuple(feature_names)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise LengthMismatch(
            f"matrix has {X.shape[1] if X.ndim == 2 else '?'} columns for {len(names)} names"
        )
    n, p = X.shape
    mu = X.mean(axis=0) if n else np.zeros(p)
    sd = X.std(axis=0) if n else np.zeros(p)
    live = sd > 0.0
    Z = (X - mu) / np.where(live, sd, 1.0)
    Z[:, ~live] = 0.0

    cols = list(range(p))
    removed: list[tuple[str, str]] = []
    use_pairwise = False
    while True:
        scores: dict[int, float] = {}
        for j in cols:
            if use_pairwise:
                scores[j] = _pairwise_r2(Z, cols, live, j)
            else:
                try:
                    scores[j] = _full_r2(Z, cols, live, j)
                except SingularDesign:
                    use_pairwise = True
                    break
        if use_pairwise and len(scores) < len(cols):
            continue
        rounded = {j: round(scores[j], _R2_DECIMALS) for j in cols}
        over = [j for j in cols if rounded[j] > r2_threshold]
        if not over:
            break
        worst = max(over, key=lambda j: (rounded[j],) + _drop_key(names[j], priority))
        cols.remove(worst)
        removed.append((names[worst], f"redundant(R2={rounded[worst]:.6f})"))

    retained = tuple(names[j] for j in cols)
    return SelectionReport(retained=retained, removed=tuple(removed),
                           rho_matrix=rho_matrix(X), feature_names=names)


def _drop_key(name: str, priority: Sequence[str]):
    # inverse of the preference key: among tied scores the least preferred
    # feature should compare greatest
    idx, kind, _ = _preference_key(name, priority)
    return (idx, kind, name)


def run_selection(matrix, feature_names: Sequence[str],
                  threshold: float = DEFAULT_RHO_THRESHOLD,
                  r2_threshold: float = DEFAULT_R2_THRESHOLD,
                  priority: Sequence[str] = DEFAULT_PRIORITY) -> SelectionReport:
    """Correlation pass then redundancy pass; one combined report."""
    X = np.asarray(matrix, dtype=np.float64)
    names = tuple(feature_names)
    first = correlation_filter(X, names, threshold, priority)
    kept_idx = [i for i, nm in enumerate(names) if nm in set(first.retained)]
    second = redundancy_filter(X[:, kept_idx], first.retained, r2_threshold, priority)
    removed = first.removed + second.removed
    return SelectionReport(retained=second.retained, removed=removed,
                           rho_matrix=first.rho_matrix, feature_names=names)


def single_linkage_merges(rho: np.ndarray) -> list[tuple[float, tuple[int, ...], tuple[int, ...]]]:
    """Agglomeration sequence on distance 1 - |rho|, for display."""
    p = rho.shape[0]
    D = 1.0 - np.abs(rho)
    clusters: list[tuple[int, ...]] = [(i,) for i in range(p)]
    merges = []
    while len(clusters) > 1:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                d = min(D[i, j] for i in clusters[a] for j in clusters[b])
                if best is None or d < best[0]:
                    best = (d, a, b)
        d, a, b = best
        merges.append((float(d), clusters[a], clusters[b]))
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    return merges


def render_dendrogram(rho: np.ndarray, feature_names: Sequence[str]) -> str:
    """Plain-text merge trace, one line per join, closest pairs first."""
    names = list(feature_names)
    lines = []
    for d, left, right in single_linkage_merges(rho):
        ltxt = "+".join(names[i] for i in left)
        rtxt = "+".join(names[i] for i in right)
        lines.append(f"{d:8.4f}  {ltxt} | {rtxt}")
    return "\n".join(lines)
