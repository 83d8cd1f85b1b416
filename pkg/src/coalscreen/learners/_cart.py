"""Compiled CART kernels shared by the tree, forest and boosting learners.

Splits minimize the within-node sum of squared deviations of the target. For
a 0/1 target this is the Gini criterion: a node of size n with class-1 share
q has Gini impurity 2q(1-q) and squared-error sum nq(1-q), so the size-weighted
Gini decrease of a split is exactly twice its squared-error decrease.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _sse(s, s2, n):
    return s2 - s * s / n


@njit(cache=True)
def grow_tree(X, y, sample, mtry, max_depth, min_leaf, seed):
    """Grow one tree on the rows listed in ``sample`` (duplicates allowed).

    Returns node arrays ``(feature, threshold, left, right, value, n_node)``
    and the per-feature squared-error decrease summed over the tree's splits.
    Leaves have ``feature == -1``. Rows go left when ``x <= threshold``.
    ``mtry >= p`` scans every feature in column order; otherwise a fresh
    random subset of ``mtry`` features is drawn at each node.
    """
    np.random.seed(seed)
    p = X.shape[1]
    m = sample.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    n_node = np.zeros(cap, np.int64)
    decrease = np.zeros(p)

    idx = sample.copy()
    # stack of (node id, start, stop, depth)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    feats = np.arange(p)
    xs = np.empty(m)
    ys = np.empty(m)

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        n = hi - lo
        s = 0.0
        s2 = 0.0
        for i in range(lo, hi):
            v = y[idx[i]]
            s += v
            s2 += v * v
        value[node] = s / n
        n_node[node] = n
        parent_sse = _sse(s, s2, n)
        if n < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or parent_sse <= 1e-12 * max(s2, 1.0):
            continue

        if mtry < p:
            # partial Fisher-Yates: the first mtry entries become the candidates
            for j in range(p):
                feats[j] = j
            for j in range(mtry):
                r = j + np.random.randint(p - j)
                t = feats[j]
                feats[j] = feats[r]
                feats[r] = t
            n_cand = mtry
        else:
            n_cand = p

        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        for c in range(n_cand):
            f = feats[c] if mtry < p else c
            for i in range(n):
                xs[i] = X[idx[lo + i], f]
                ys[i] = y[idx[lo + i]]
            o = np.argsort(xs[:n])
            xs[:n] = xs[:n][o]
            ys[:n] = ys[:n][o]
            sl = 0.0
            sl2 = 0.0
            for i in range(n - 1):
                v = ys[i]
                sl += v
                sl2 += v * v
                nl = i + 1
                if nl < min_leaf or n - nl < min_leaf:
                    continue
                a = xs[i]
                b = xs[i + 1]
                if a == b:
                    continue
                gain = parent_sse - _sse(sl, sl2, nl) - _sse(s - sl, s2 - sl2, n - nl)
                if gain > best_gain + 1e-12 * parent_sse:
                    best_gain = gain
                    best_feat = f
                    thr = 0.5 * (a + b)
                    if thr >= b:
                        thr = a
                    best_thr = thr
        if best_feat < 0:
            continue

        # partition idx[lo:hi] in place around the threshold
        i = lo
        j = hi - 1
        while i <= j:
            if X[idx[i], best_feat] <= best_thr:
                i += 1
            else:
                t = idx[i]
                idx[i] = idx[j]
                idx[j] = t
                j -= 1
        mid = i
        feature[node] = best_feat
        threshold[node] = best_thr
        decrease[best_feat] += best_gain
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        st_node[top] = r_id
        st_lo[top] = mid
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = l_id
        st_lo[top] = lo
        st_hi[top] = mid
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), n_node[:n_nodes].copy(), decrease)


@njit(cache=True)
def grow_tree_sorted(X, y, order, max_depth, min_leaf):
    """Same tree as ``grow_tree`` with every row once and every feature scanned.

    ``order[f]`` lists all row indices sorted by ``X[:, f]``. Nodes keep
    those lists stably partitioned, so no sorting happens while growing;
    this pays off when one design matrix is reused for many trees.
    """
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    n_node = np.zeros(cap, np.int64)
    decrease = np.zeros(p)
    ords = order.copy()
    goes_left = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int64)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        m = hi - lo
        s = 0.0
        s2 = 0.0
        for i in range(lo, hi):
            v = y[ords[0, i]]
            s += v
            s2 += v * v
        value[node] = s / m
        n_node[node] = m
        parent_sse = _sse(s, s2, m)
        if m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or parent_sse <= 1e-12 * max(s2, 1.0):
            continue
        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        for f in range(p):
            sl = 0.0
            sl2 = 0.0
            for i in range(m - 1):
                row = ords[f, lo + i]
                v = y[row]
                sl += v
                sl2 += v * v
                nl = i + 1
                if nl < min_leaf or m - nl < min_leaf:
                    continue
                a = X[row, f]
                b = X[ords[f, lo + i + 1], f]
                if a == b:
                    continue
                gain = parent_sse - _sse(sl, sl2, nl) - _sse(s - sl, s2 - sl2, m - nl)
                if gain > best_gain + 1e-12 * parent_sse:
                    best_gain = gain
                    best_feat = f
                    thr = 0.5 * (a + b)
                    if thr >= b:
                        thr = a
                    best_thr = thr
        if best_feat < 0:
            continue
        n_left = 0
        for i in range(lo, hi):
            row = ords[0, i]
            goes_left[row] = X[row, best_feat] <= best_thr
            if goes_left[row]:
                n_left += 1
        mid = lo + n_left
        for f in range(p):
            a = lo
            b = 0
            for i in range(lo, hi):
                row = ords[f, i]
                if goes_left[row]:
                    ords[f, a] = row
                    a += 1
                else:
                    buf[b] = row
                    b += 1
            for i in range(b):
                ords[f, mid + i] = buf[i]
        feature[node] = best_feat
        threshold[node] = best_thr
        decrease[best_feat] += best_gain
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        st_node[top] = r_id
        st_lo[top] = mid
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = l_id
        st_lo[top] = lo
        st_hi[top] = mid
        st_depth[top] = depth + 1
        top += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), n_node[:n_nodes].copy(), decrease)


@njit(cache=True)
def apply_trees(X, roots, feature, threshold, left, right, value):
    """Leaf value of every row in every tree, shape ``(n_rows, n_trees)``.

    Trees are stored back to back; ``roots[t]`` is the offset of tree ``t``
    and child pointers are absolute.
    """
    n = X.shape[0]
    out = np.empty((n, roots.shape[0]))
    for t in range(roots.shape[0]):
        for i in range(n):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, t] = value[node]
    return out


@njit(cache=True)
def boost(X, y, rounds, max_depth, min_leaf, learning_rate, base):
    """Logistic gradient boosting with depth-limited regression trees.

    Each tree is grown on the residuals ``y - p`` with every feature scanned. Returns
    per-round node arrays of shape ``(n_grown, cap)``, their node counts
    and the loss history (entry 0 is the constant model).
    """
    n = X.shape[0]
    cap = 2 * n + 1
    if max_depth >= 0 and max_depth < 30:
        cap = min(cap, 2 ** (max_depth + 1) - 1)
    feature = np.full((rounds, cap), -1, np.int64)
    threshold = np.zeros((rounds, cap))
    left = np.full((rounds, cap), -1, np.int64)
    right = np.full((rounds, cap), -1, np.int64)
    value = np.zeros((rounds, cap))
    sizes = np.zeros(rounds, np.int64)
    losses = np.empty(rounds + 1)
    order = np.empty((X.shape[1], n), np.int64)
    for f in range(X.shape[1]):
        order[f] = np.argsort(X[:, f], kind="mergesort")
    score = np.full(n, base)
    resid = np.empty(n)

    def loss_of(score):
        s = 0.0
        for i in range(n):
            z = score[i]
            if z > 0:
                s += z + np.log1p(np.exp(-z)) - y[i] * z
            else:
                s += np.log1p(np.exp(z)) - y[i] * z
        return s / n

    losses[0] = loss_of(score)
    done = 0
    for r in range(rounds):
        worst = 0.0
        for i in range(n):
            resid[i] = y[i] - 1.0 / (1.0 + np.exp(-score[i]))
            worst = max(worst, abs(resid[i]))
        if worst < 1e-12:
            break
        f, t, lft, rgt, val, _, _ = grow_tree_sorted(X, resid, order, max_depth, min_leaf)
        k = f.shape[0]
        feature[r, :k] = f
        threshold[r, :k] = t
        left[r, :k] = lft
        right[r, :k] = rgt
        value[r, :k] = val
        sizes[r] = k
        for i in range(n):
            node = 0
            while f[node] >= 0:
                if X[i, f[node]] <= t[node]:
                    node = lft[node]
                else:
                    node = rgt[node]
            score[i] += learning_rate * val[node]
        losses[r + 1] = loss_of(score)
        done = r + 1
    return feature[:done], threshold[:done], left[:done], right[:done], value[:done], sizes[:done], losses[:done + 1]
