"""Pure-numpy tree grower.

This module and the compiled twin (_grow_cy) implement the exact same
algorithm and must return bit-identical trees for identical inputs. Keep the
arithmetic in the two files structurally parallel: every division, multiply
and subtraction must happen in the same order, because the tests assert exact
agreement between backends.

Determinism rules shared by both growers:
  - node ids are assigned in preorder (parent, left subtree, right subtree);
  - each node draws its feature subset from a splitmix64 stream derived from
    (tree seed, node id);
  - per-feature candidate positions are scanned in sorted order, ties between
    equal costs resolved toward the earlier candidate feature and earlier
    position (strict-less-than updates);
  - sample order inside a node stays ascending by bootstrap position, and
    sorting ties break by that position (stable sort).
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _splitmix_next(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK
    return _mix64(state), state


def feature_subset(p: int, k: int, tree_seed: int, node_id: int) -> list[int]:
    """The k candidate features of one node, in draw order.

    Partial Fisher-Yates over 0..p-1 driven by a splitmix64 stream seeded
    from (tree_seed, node_id).
    """
    state = _mix64(tree_seed ^ (((node_id + 1) * _GOLDEN) & _MASK))
    arr = list(range(p))
    for i in range(k):
        r, state = _splitmix_next(state)
        j = i + r % (p - i)
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:k]


def grow_tree(Xb: np.ndarray, yb: np.ndarray, max_depth: int, min_leaf: float,
              k: int, tree_seed: int):
    """Grow one tree on an already-bootstrapped sample (unit weights).

    Returns (feature, threshold, left, right, value) arrays; feature == -1
    marks a leaf. value is the positive fraction of the node.
    """
    m, p = Xb.shape
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(idx: np.ndarray, depth: int) -> int:
        nid = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        n = idx.shape[0]
        y_node = yb[idx]
        pos = float(y_node.sum())
        value.append(pos / n)
        if depth >= max_depth or n < 2.0 * min_leaf or pos == 0.0 or pos == n:
            return nid
        feats = feature_subset(p, k, tree_seed, nid)
        sub = Xb[np.ix_(idx, feats)]                      # (n, k)
        order = np.argsort(sub, axis=0, kind="stable")
        vs = np.take_along_axis(sub, order, axis=0)
        ys = y_node[order]                                # (n, k)
        cum = np.cumsum(ys, axis=0)
        nl = np.arange(1, n, dtype=np.float64)[:, None]
        nr = n - nl
        pl = cum[:-1]
        pr = pos - pl
        a = pl / nl
        b = (nl - pl) / nl
        gl = 1.0 - a * a - b * b
        c = pr / nr
        d = (nr - pr) / nr
        gr = 1.0 - c * c - d * d
        cost = nl * gl + nr * gr
        valid = (vs[1:] > vs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        cost = np.where(valid, cost, np.inf)
        flat = cost.T.reshape(-1)                         # feature-major
        best = int(np.argmin(flat))
        if not np.isfinite(flat[best]):
            return nid
        f_pos, split_m1 = divmod(best, n - 1)
        split = split_m1 + 1
        f = feats[f_pos]
        v_lo = float(vs[split - 1, f_pos])
        v_hi = float(vs[split, f_pos])
        thr = 0.5 * (v_lo + v_hi)
        if thr >= v_hi:                                   # midpoint rounded up
            thr = v_lo
        mask = Xb[idx, f] <= thr
        left_idx = idx[mask]
        right_idx = idx[~mask]
        feature[nid] = f
        threshold[nid] = thr
        l_id = new_node(left_idx, depth + 1)
        r_id = new_node(right_idx, depth + 1)
        left[nid] = l_id
        right[nid] = r_id
        return nid

    new_node(np.arange(m, dtype=np.intp), 0)
    return (
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(value, dtype=np.float64),
    )
