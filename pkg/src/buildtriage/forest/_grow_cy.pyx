# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree grower.

Twin of _grow_py: same preorder node ids, same splitmix64 feature subsets,
same strict-less-than tie-breaks, same float operation order. Any change here
must be mirrored there; the test suite asserts bit-identical trees.
"""

import numpy as np

cimport cython

ctypedef unsigned long long u64
ctypedef long long i64

cdef extern from "stdlib.h":
    void* malloc(size_t size) nogil
    void free(void* ptr) nogil
    void qsort(void* base, size_t nmemb, size_t size,
               int (*compar)(const void*, const void*)) nogil

cdef extern from "math.h":
    double INFINITY

cdef u64 _GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline u64 _mix64(u64 z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct Pair:
    double v
    i64 i


cdef int _cmp_pair(const void* pa, const void* pb) noexcept nogil:
    cdef const Pair* a = <const Pair*> pa
    cdef const Pair* b = <const Pair*> pb
    if a.v < b.v:
        return -1
    if a.v > b.v:
        return 1
    if a.i < b.i:
        return -1
    if a.i > b.i:
        return 1
    return 0


cdef struct GrowCtx:
    const double* X
    const double* y
    Py_ssize_t m
    Py_ssize_t p
    int max_depth
    double min_leaf
    int k
    u64 tree_seed
    i64* idxs
    i64* tmp
    Pair* pairs
    int* feats
    int* feature
    double* threshold
    int* left
    int* right
    double* value
    Py_ssize_t n_nodes


cdef void _feature_subset(GrowCtx* ctx, Py_ssize_t nid) noexcept nogil:
    cdef u64 state = _mix64(ctx.tree_seed ^ ((<u64> (nid + 1)) * _GOLDEN))
    cdef Py_ssize_t i, j
    cdef u64 r
    cdef int t
    for i in range(ctx.p):
        ctx.feats[i] = <int> i
    for i in range(ctx.k):
        state = state + _GOLDEN
        r = _mix64(state)
        j = i + <Py_ssize_t> (r % (<u64> (ctx.p - i)))
        t = ctx.feats[i]
        ctx.feats[i] = ctx.feats[j]
        ctx.feats[j] = t


cdef Py_ssize_t _build(GrowCtx* ctx, Py_ssize_t start, Py_ssize_t end,
                       int depth) noexcept nogil:
    cdef Py_ssize_t nid = ctx.n_nodes
    ctx.n_nodes += 1
    ctx.feature[nid] = -1
    ctx.threshold[nid] = 0.0
    ctx.left[nid] = -1
    ctx.right[nid] = -1
    cdef Py_ssize_t n = end - start
    cdef double pos = 0.0
    cdef Py_ssize_t r
    for r in range(start, end):
        pos += ctx.y[ctx.idxs[r]]
    ctx.value[nid] = pos / (<double> n)
    if depth >= ctx.max_depth or (<double> n) < 2.0 * ctx.min_leaf \
            or pos == 0.0 or pos == (<double> n):
        return nid
    _feature_subset(ctx, nid)
    cdef double best_cost = INFINITY
    cdef int best_fpos = -1
    cdef double best_vlo = 0.0
    cdef double best_vhi = 0.0
    cdef Py_ssize_t fpos, i
    cdef int f
    cdef double run_pos, nl, nr, pl, pr, a, b, gl, c, d, gr, cost, vlo, vhi
    for fpos in range(ctx.k):
        f = ctx.feats[fpos]
        for i in range(n):
            ctx.pairs[i].v = ctx.X[ctx.idxs[start + i] * ctx.p + f]
            ctx.pairs[i].i = i
        qsort(<void*> ctx.pairs, <size_t> n, sizeof(Pair), _cmp_pair)
        run_pos = 0.0
        for i in range(1, n):
            run_pos += ctx.y[ctx.idxs[start + ctx.pairs[i - 1].i]]
            vlo = ctx.pairs[i - 1].v
            vhi = ctx.pairs[i].v
            nl = <double> i
            nr = <double> (n - i)
            if vhi > vlo and nl >= ctx.min_leaf and nr >= ctx.min_leaf:
                pl = run_pos
                pr = pos - pl
                a = pl / nl
                b = (nl - pl) / nl
                gl = 1.0 - a * a - b * b
                c = pr / nr
                d = (nr - pr) / nr
                gr = 1.0 - c * c - d * d
                cost = nl * gl + nr * gr
                if cost < best_cost:
                    best_cost = cost
                    best_fpos = <int> fpos
                    best_vlo = vlo
                    best_vhi = vhi
    if best_fpos < 0:
        return nid
    cdef double thr = 0.5 * (best_vlo + best_vhi)
    if thr >= best_vhi:
        thr = best_vlo
    cdef int bf = ctx.feats[best_fpos]
    cdef Py_ssize_t write = start
    cdef Py_ssize_t t = 0
    cdef i64 row
    for r in range(start, end):
        row = ctx.idxs[r]
        if ctx.X[row * ctx.p + bf] <= thr:
            ctx.idxs[write] = row
            write += 1
        else:
            ctx.tmp[t] = row
            t += 1
    for r in range(t):
        ctx.idxs[write + r] = ctx.tmp[r]
    ctx.feature[nid] = bf
    ctx.threshold[nid] = thr
    cdef Py_ssize_t l_id = _build(ctx, start, write, depth + 1)
    cdef Py_ssize_t r_id = _build(ctx, write, end, depth + 1)
    ctx.left[nid] = <int> l_id
    ctx.right[nid] = <int> r_id
    return nid


def feature_subset(p, k, tree_seed, node_id):
    """Python-visible wrapper used only by the backend-agreement tests."""
    cdef GrowCtx ctx
    cdef int pp = p
    cdef int kk = k
    ctx.p = pp
    ctx.k = kk
    ctx.tree_seed = <u64> tree_seed
    ctx.feats = <int*> malloc(pp * sizeof(int))
    if ctx.feats == NULL:
        raise MemoryError()
    try:
        _feature_subset(&ctx, <Py_ssize_t> node_id)
        return [ctx.feats[i] for i in range(kk)]
    finally:
        free(ctx.feats)


@cython.boundscheck(False)
@cython.wraparound(False)
def grow_tree(double[:, ::1] Xb, double[::1] yb, int max_depth,
              double min_leaf, int k, tree_seed):
    """Grow one tree on an already-bootstrapped sample (unit weights).

    Same contract as _grow_py.grow_tree.
    """
    cdef Py_ssize_t m = Xb.shape[0]
    cdef Py_ssize_t p = Xb.shape[1]
    if m == 0:
        raise ValueError("cannot grow a tree on zero rows")
    cdef Py_ssize_t cap = 2 * m + 1
    feature_arr = np.empty(cap, dtype=np.int32)
    threshold_arr = np.empty(cap, dtype=np.float64)
    left_arr = np.empty(cap, dtype=np.int32)
    right_arr = np.empty(cap, dtype=np.int32)
    value_arr = np.empty(cap, dtype=np.float64)
    cdef int[::1] feature_mv = feature_arr
    cdef double[::1] threshold_mv = threshold_arr
    cdef int[::1] left_mv = left_arr
    cdef int[::1] right_mv = right_arr
    cdef double[::1] value_mv = value_arr

    cdef GrowCtx ctx
    ctx.X = &Xb[0, 0]
    ctx.y = &yb[0]
    ctx.m = m
    ctx.p = p
    ctx.max_depth = max_depth
    ctx.min_leaf = min_leaf
    ctx.k = k
    ctx.tree_seed = <u64> tree_seed
    ctx.feature = &feature_mv[0]
    ctx.threshold = &threshold_mv[0]
    ctx.left = &left_mv[0]
    ctx.right = &right_mv[0]
    ctx.value = &value_mv[0]
    ctx.n_nodes = 0
    ctx.idxs = <i64*> malloc(m * sizeof(i64))
    ctx.tmp = <i64*> malloc(m * sizeof(i64))
    ctx.pairs = <Pair*> malloc(m * sizeof(Pair))
    ctx.feats = <int*> malloc(p * sizeof(int))
    if ctx.idxs == NULL or ctx.tmp == NULL or ctx.pairs == NULL or ctx.feats == NULL:
        free(ctx.idxs)
        free(ctx.tmp)
        free(ctx.pairs)
        free(ctx.feats)
        raise MemoryError()
    cdef Py_ssize_t i
    for i in range(m):
        ctx.idxs[i] = i
    try:
        with nogil:
            _build(&ctx, 0, m, 0)
    finally:
        free(ctx.idxs)
        free(ctx.tmp)
        free(ctx.pairs)
        free(ctx.feats)
    cdef Py_ssize_t count = ctx.n_nodes
    return (
        feature_arr[:count].copy(),
        threshold_arr[:count].copy(),
        left_arr[:count].copy(),
        right_arr[:count].copy(),
        value_arr[:count].copy(),
    )
