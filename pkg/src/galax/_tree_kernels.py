"""Compiled hot loops for tree growth and traversal.

numba is a soft dependency: when it is importable the kernels are
njit-compiled, otherwise they run as plain Python with identical semantics
(slow, but bit-for-bit the same trees).  All randomness inside the kernels
comes from an explicit SplitMix64 stream seeded by the caller, so results
do not depend on the numpy RNG, the backend, or scheduling.

Integer state is kept masked to 64 bits, which works both for numba's
wrapping uint64 arithmetic and for Python's unbounded ints.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


_MASK = 0xFFFFFFFFFFFFFFFF
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _rng_next(state):
    """Advance a SplitMix64 state; return (new_state, uniform in [0, 1))."""
    state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z = z ^ (z >> 31)
    return state, float(z >> 11) * _INV_2_53


@njit(cache=True, nogil=True)
def grow_tree(X, y_real, y_lab, w, n_classes, max_depth, min_leaf, n_feat,
              random_thresholds, bootstrap, seed):
    """Grow one CART tree; returns flat node arrays.

    ``n_classes == 0`` grows a regression tree on ``y_real`` (weighted
    variance criterion); otherwise a classification tree on ``y_lab``
    (weighted Gini).  ``bootstrap`` resamples m rows with probability
    proportional to ``w`` (drawn rows then count with weight 1 each).
    Splits maximise the weighted impurity decrease; ties break toward the
    lowest feature index, then the lowest threshold.  Nodes are processed
    in preorder so the random stream is consumed in a fixed order.
    """
    m, d = X.shape
    K = n_classes if n_classes > 0 else 1
    state = seed & 0xFFFFFFFFFFFFFFFF

    # --- row sample ------------------------------------------------------
    Xs = np.empty((m, d))
    ys = np.empty(m)
    lab = np.empty(m, np.int64)
    ws = np.empty(m)
    if bootstrap:
        cw = np.empty(m)
        acc = 0.0
        for i in range(m):
            acc += w[i]
            cw[i] = acc
        for i in range(m):
            state, u = _rng_next(state)
            target = u * acc
            lo_b = 0
            hi_b = m - 1
            while lo_b < hi_b:
                mid = (lo_b + hi_b) // 2
                if cw[mid] > target:
                    hi_b = mid
                else:
                    lo_b = mid + 1
            r = lo_b
            for j in range(d):
                Xs[i, j] = X[r, j]
            ys[i] = y_real[r]
            lab[i] = y_lab[r]
            ws[i] = 1.0
    else:
        for i in range(m):
            for j in range(d):
                Xs[i, j] = X[i, j]
            ys[i] = y_real[i]
            lab[i] = y_lab[i]
            ws[i] = w[i]

    # --- node storage ----------------------------------------------------
    max_nodes = 2 * m + 1
    feat = np.full(max_nodes, -1, np.int32)
    thr = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros((max_nodes, K))
    n_nodes = 1

    buf = np.empty(m, np.int64)
    for i in range(m):
        buf[i] = i
    tmp = np.empty(m, np.int64)
    vals = np.empty(m)
    svals = np.empty(m)
    sums = np.empty(K)
    run = np.empty(K)
    feats = np.empty(d, np.int64)

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    stack_depth = np.empty(max_nodes, np.int64)
    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = m
    stack_depth[sp] = 0
    sp += 1

    while sp > 0:
        sp -= 1
        nid = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        mn = hi - lo

        w_total = 0.0
        for k in range(K):
            sums[k] = 0.0
        if n_classes > 0:
            for p in range(lo, hi):
                r = buf[p]
                w_total += ws[r]
                sums[lab[r]] += ws[r]
        else:
            for p in range(lo, hi):
                r = buf[p]
                w_total += ws[r]
                sums[0] += ws[r] * ys[r]

        pure = True
        if n_classes > 0:
            first = lab[buf[lo]]
            for p in range(lo + 1, hi):
                if lab[buf[p]] != first:
                    pure = False
                    break
        else:
            first_y = ys[buf[lo]]
            for p in range(lo + 1, hi):
                if ys[buf[p]] != first_y:
                    pure = False
                    break

        make_leaf = pure or depth >= max_depth or mn < 2 * min_leaf

        best_score = -1.0
        best_feat = -1
        best_thr = 0.0
        if not make_leaf:
            # candidate features (sorted partial Fisher-Yates draw)
            if n_feat < d:
                for j in range(d):
                    feats[j] = j
                for i in range(n_feat):
                    state, u = _rng_next(state)
                    j = i + int(u * (d - i))
                    t = feats[i]
                    feats[i] = feats[j]
                    feats[j] = t
                for i in range(1, n_feat):
                    key = feats[i]
                    j = i - 1
                    while j >= 0 and feats[j] > key:
                        feats[j + 1] = feats[j]
                        j -= 1
                    feats[j + 1] = key
                n_cand = n_feat
            else:
                for j in range(d):
                    feats[j] = j
                n_cand = d

            parent_score = 0.0
            for k in range(K):
                parent_score += sums[k] * sums[k]
            parent_score /= w_total
            best_score = parent_score

            for ci in range(n_cand):
                c = feats[ci]
                if random_thresholds:
                    lo_v = Xs[buf[lo], c]
                    hi_v = lo_v
                    for p in range(lo + 1, hi):
                        v = Xs[buf[p], c]
                        if v < lo_v:
                            lo_v = v
                        elif v > hi_v:
                            hi_v = v
                    state, u = _rng_next(state)
                    t = lo_v + (hi_v - lo_v) * u
                    if hi_v <= lo_v:
                        continue
                    run_w = 0.0
                    for k in range(K):
                        run[k] = 0.0
                    cnt = 0
                    if n_classes > 0:
                        for p in range(lo, hi):
                            r = buf[p]
                            if Xs[r, c] <= t:
                                run_w += ws[r]
                                run[lab[r]] += ws[r]
                                cnt += 1
                    else:
                        for p in range(lo, hi):
                            r = buf[p]
                            if Xs[r, c] <= t:
                                run_w += ws[r]
                                run[0] += ws[r] * ys[r]
                                cnt += 1
                    if cnt < min_leaf or mn - cnt < min_leaf:
                        continue
                    if run_w <= 0.0 or w_total - run_w <= 0.0:
                        continue  # absorbed-to-zero side weight
                    sl = 0.0
                    sr = 0.0
                    for k in range(K):
                        sl += run[k] * run[k]
                        sr += (sums[k] - run[k]) * (sums[k] - run[k])
                    score = sl / run_w + sr / (w_total - run_w)
                    if score > best_score:
                        best_score = score
                        best_feat = c
                        best_thr = t
                else:
                    for p in range(lo, hi):
                        vals[p - lo] = Xs[buf[p], c]
                    order = np.argsort(vals[:mn])
                    for i in range(mn):
                        svals[i] = vals[order[i]]
                    run_w = 0.0
                    for k in range(K):
                        run[k] = 0.0
                    for i in range(mn - 1):
                        r = buf[lo + order[i]]
                        run_w += ws[r]
                        if n_classes > 0:
                            run[lab[r]] += ws[r]
                        else:
                            run[0] += ws[r] * ys[r]
                        if svals[i + 1] <= svals[i]:
                            continue
                        cnt = i + 1
                        if cnt < min_leaf or mn - cnt < min_leaf:
                            continue
                        if run_w <= 0.0 or w_total - run_w <= 0.0:
                            continue  # absorbed-to-zero side weight
                        sl = 0.0
                        sr = 0.0
                        for k in range(K):
                            sl += run[k] * run[k]
                            sr += (sums[k] - run[k]) * (sums[k] - run[k])
                        score = sl / run_w + sr / (w_total - run_w)
                        if score > best_score:
                            mid_t = 0.5 * (svals[i] + svals[i + 1])
                            if mid_t >= svals[i + 1]:
                                mid_t = svals[i]
                            best_score = score
                            best_feat = c
                            best_thr = mid_t

        if make_leaf or best_feat < 0:
            if n_classes > 0:
                for k in range(K):
                    value[nid, k] = sums[k] / w_total
            else:
                value[nid, 0] = sums[0] / w_total
            continue

        # stable partition of the segment
        nl = 0
        for p in range(lo, hi):
            if Xs[buf[p], best_feat] <= best_thr:
                tmp[nl] = buf[p]
                nl += 1
        nr = nl
        for p in range(lo, hi):
            if not (Xs[buf[p], best_feat] <= best_thr):
                tmp[nr] = buf[p]
                nr += 1
        for i in range(mn):
            buf[lo + i] = tmp[i]

        feat[nid] = best_feat
        thr[nid] = best_thr
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[nid] = left_id
        right[nid] = right_id
        # push right first so the left subtree is processed first
        stack_node[sp] = right_id
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = left_id
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        stack_depth[sp] = depth + 1
        sp += 1

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True, nogil=True)
def _apply_compiled(feature, threshold, left, right, X):
    m = X.shape[0]
    out = np.empty(m, np.int64)
    for i in range(m):
        node = 0
        f = feature[node]
        while f >= 0:
            if X[i, f] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
            f = feature[node]
        out[i] = node
    return out


def _apply_python(feature, threshold, left, right, X):
    # vectorised masked descent; identical leaf assignment, no compiled code
    idx = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        f = feature[idx]
        active = f >= 0
        if not active.any():
            return idx
        rows = np.nonzero(active)[0]
        node = idx[rows]
        go_left = X[rows, f[rows]] <= threshold[node]
        idx[rows] = np.where(go_left, left[node], right[node])


apply_tree = _apply_compiled if HAVE_NUMBA else _apply_python
