"""Numba kernels: CART growth, traversal, and proximity-pair accumulation.

All randomness inside the kernels comes from an inline splitmix64 stream
seeded per tree, so results are independent of scheduling and thread
count. Keep every RNG intermediate uint64: mixing signed ints would
promote to float64 under numba/numpy rules.
"""

import numpy as np
from numba import njit

# minimum impurity decrease counted as an improvement; real Gini/SSE gains
# are >= O(1/n^2), float cancellation noise is far below this
_EPS_IMPROVE = 1e-12


@njit(cache=True)
def _mix64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def build_tree(X, y, boot, mtry, min_rows, n_classes, is_classif, seed):
    """Grow one CART tree on a bootstrap sample.

    X: (n, p) float64; y: (n,) float64 holding class indices or targets;
    boot: int64 row indices drawn with replacement. Splits maximize Gini
    decrease (classification) or variance reduction (regression) over mtry
    features sampled without replacement per node; thresholds sit at
    midpoints of adjacent observed values; exact ties break toward the
    smallest feature index, then the smallest threshold. Leaves are marked
    feature == -1 and predict the in-bag majority class (ties toward the
    smallest index) or the in-bag mean. Returns trimmed node arrays.
    """
    n_boot = boot.shape[0]
    p = X.shape[1]
    cap = 2 * n_boot + 1

    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap, np.float64)

    samples = boot.copy()
    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    feats = np.arange(p)
    counts = np.zeros(n_classes, np.int64)
    left_counts = np.zeros(n_classes, np.int64)
    vals = np.empty(n_boot, np.float64)
    ysort = np.empty(n_boot, np.float64)
    tmp = np.empty(n_boot, np.int64)

    state = seed
    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n_boot

    while top >= 0:
        nid = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        top -= 1
        size = hi - lo
        fsize = float(size)

        s = 0.0
        ss = 0.0
        sq_total = 0.0
        if is_classif:
            for c in range(n_classes):
                counts[c] = 0
            for k in range(lo, hi):
                counts[int(y[samples[k]])] += 1
            best_c = 0
            for c in range(1, n_classes):
                if counts[c] > counts[best_c]:
                    best_c = c
            node_value = float(best_c)
            pure = counts[best_c] == size
            for c in range(n_classes):
                sq_total += float(counts[c]) * float(counts[c])
            parent_crit = fsize * (1.0 - sq_total / (fsize * fsize))
        else:
            for k in range(lo, hi):
                v = y[samples[k]]
                s += v
                ss += v * v
            node_value = s / fsize
            parent_crit = ss - s * s / fsize
            pure = parent_crit <= 0.0

        value[nid] = node_value
        if size < min_rows or pure:
            continue

        best_dec = -1.0
        best_f = -1
        best_thr = 0.0
        for j in range(mtry):
            state, z = _mix64(state)
            r = int(z % np.uint64(p - j))
            idx = j + r
            f = feats[idx]
            feats[idx] = feats[j]
            feats[j] = f

            for k in range(size):
                vals[k] = X[samples[lo + k], f]
            order = np.argsort(vals[:size])
            for k in range(size):
                ysort[k] = y[samples[lo + order[k]]]

            if is_classif:
                for c in range(n_classes):
                    left_counts[c] = 0
                sql = 0.0
                sqr = sq_total
                for k in range(size - 1):
                    c = int(ysort[k])
                    cl = left_counts[c]
                    sql += 2.0 * cl + 1.0
                    sqr -= 2.0 * float(counts[c] - cl) - 1.0
                    left_counts[c] = cl + 1
                    vk = vals[order[k]]
                    vk1 = vals[order[k + 1]]
                    if vk1 > vk:
                        fnl = float(k + 1)
                        fnr = fsize - fnl
                        children = fnl * (1.0 - sql / (fnl * fnl)) + fnr * (
                            1.0 - sqr / (fnr * fnr)
                        )
                        dec = (parent_crit - children) / fsize
                        if dec > _EPS_IMPROVE:
                            thr = vk + 0.5 * (vk1 - vk)
                            if thr >= vk1:
                                thr = vk
                            if (
                                dec > best_dec
                                or (dec == best_dec and f < best_f)
                                or (
                                    dec == best_dec
                                    and f == best_f
                                    and thr < best_thr
                                )
                            ):
                                best_dec = dec
                                best_f = f
                                best_thr = thr
            else:
                sl = 0.0
                ssl = 0.0
                for k in range(size - 1):
                    v = ysort[k]
                    sl += v
                    ssl += v * v
                    vk = vals[order[k]]
                    vk1 = vals[order[k + 1]]
                    if vk1 > vk:
                        fnl = float(k + 1)
                        fnr = fsize - fnl
                        sr = s - sl
                        ssr = ss - ssl
                        children = (ssl - sl * sl / fnl) + (ssr - sr * sr / fnr)
                        dec = (parent_crit - children) / fsize
                        if dec > _EPS_IMPROVE:
                            thr = vk + 0.5 * (vk1 - vk)
                            if thr >= vk1:
                                thr = vk
                            if (
                                dec > best_dec
                                or (dec == best_dec and f < best_f)
                                or (
                                    dec == best_dec
                                    and f == best_f
                                    and thr < best_thr
                                )
                            ):
                                best_dec = dec
                                best_f = f
                                best_thr = thr

        if best_f < 0:
            continue

        nl = 0
        for k in range(lo, hi):
            if X[samples[k], best_f] <= best_thr:
                tmp[nl] = samples[k]
                nl += 1
        nr = nl
        for k in range(lo, hi):
            if X[samples[k], best_f] > best_thr:
                tmp[nr] = samples[k]
                nr += 1
        for k in range(size):
            samples[lo + k] = tmp[k]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[nid] = best_f
        threshold[nid] = best_thr
        left[nid] = lid
        right[nid] = rid
        top += 1
        stack_node[top] = rid
        stack_lo[top] = lo + nl
        stack_hi[top] = hi
        top += 1
        stack_node[top] = lid
        stack_lo[top] = lo
        stack_hi[top] = lo + nl

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def apply_tree(feature, threshold, left, right, X, out):
    """Leaf (node index) reached by every row of X."""
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node


@njit(cache=True)
def accumulate_pairs(leaf_ids, oob_idx, same, coob):
    """Upper-triangle co-OOB and shared-leaf counts for one tree."""
    m = oob_idx.shape[0]
    for a in range(m):
        i = oob_idx[a]
        li = leaf_ids[i]
        for b in range(a + 1, m):
            j = oob_idx[b]
            coob[i, j] += 1
            if leaf_ids[j] == li:
                same[i, j] += 1


@njit(cache=True)
def tree_error(feature, threshold, left, right, value, X, y, rows, src, col_mask, is_classif):
    """Mean misclassification / squared error of one tree on `rows`.

    Columns flagged in col_mask are read from the paired `src` row instead,
    which implements OOB permutation without copying X. Pass src == rows
    for the unpermuted baseline.
    """
    total = 0.0
    for k in range(rows.shape[0]):
        r = rows[k]
        sr = src[k]
        node = 0
        while feature[node] >= 0:
            f = feature[node]
            if col_mask[f]:
                xv = X[sr, f]
            else:
                xv = X[r, f]
            if xv <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        if is_classif:
            if value[node] != y[r]:
                total += 1.0
        else:
            d = value[node] - y[r]
            total += d * d
    return total / rows.shape[0]
