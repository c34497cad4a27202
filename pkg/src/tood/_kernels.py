"""Compiled inner loops: extra-tree growth, routing and leaf-id distances."""

import numpy as np
from numba import njit, prange

LEAF = -1


@njit(cache=True, nogil=True)
def _weighted_gini(hist, total):
    if total <= 0.0:
        return 0.0
    s = 0.0
    for c in range(hist.shape[0]):
        p = hist[c] / total
        s += p * p
    return 1.0 - s


@njit(cache=True, nogil=True)
def grow_tree(X, y, weight, samples, n_classes, max_features, min_samples_leaf, rng_seed):
    """Grow one extremely randomized classification tree.

    ``samples`` holds the (possibly repeated) row indices the tree is grown
    on and is permuted in place. Nodes are created in depth-first, left-first
    order; leaf ids follow the same order.

    Returns (feature, threshold, left, right, leaf_id, n_node_samples, value)
    truncated to the realized node count.
    """
    np.random.seed(rng_seed)
    m = samples.shape[0]
    n_features = X.shape[1]
    cap = 2 * m + 1
    feature = np.full(cap, LEAF, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, LEAF, dtype=np.int32)
    right = np.full(cap, LEAF, dtype=np.int32)
    leaf_id = np.full(cap, LEAF, dtype=np.int32)
    n_node = np.zeros(cap, dtype=np.int64)
    value = np.zeros((cap, n_classes), dtype=np.float64)

    feats = np.arange(n_features)
    hist = np.zeros(n_classes)
    hl = np.zeros(n_classes)
    hr = np.zeros(n_classes)

    # stack entries: start, end, parent, is_left
    stack = np.empty((cap, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = m
    stack[0, 2] = -1
    stack[0, 3] = 0
    top = 1
    node_count = 0
    leaf_count = 0

    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        parent = stack[top, 2]
        is_left = stack[top, 3]
        node = node_count
        node_count += 1
        if parent >= 0:
            if is_left == 1:
                left[parent] = node
            else:
                right[parent] = node

        size = end - start
        n_node[node] = size
        hist[:] = 0.0
        for i in range(start, end):
            s = samples[i]
            hist[y[s]] += weight[s]
        value[node, :] = hist
        total = 0.0
        populated = 0
        for c in range(n_classes):
            total += hist[c]
            if hist[c] > 0.0:
                populated += 1

        best_feat = -1
        best_thr = 0.0
        if populated > 1 and size >= 2 * min_samples_leaf:
            best_score = np.inf
            visited = 0
            drawn = 0
            while visited < max_features and drawn < n_features:
                # partial Fisher-Yates over the feature pool
                j = drawn + np.random.randint(0, n_features - drawn)
                tmp = feats[drawn]
                feats[drawn] = feats[j]
                feats[j] = tmp
                f = feats[drawn]
                drawn += 1

                lo = np.inf
                hi = -np.inf
                for i in range(start, end):
                    v = X[samples[i], f]
                    if v < lo:
                        lo = v
                    if v > hi:
                        hi = v
                if not hi > lo:
                    continue  # node-constant; not counted
                visited += 1
                t = lo + np.random.random() * (hi - lo)
                if not (lo < t < hi):
                    t = 0.5 * (lo + hi)
                    if not (lo < t < hi):
                        t = lo  # adjacent floats: x <= lo goes left

                hl[:] = 0.0
                nl = 0
                for i in range(start, end):
                    s = samples[i]
                    if X[s, f] <= t:
                        hl[y[s]] += weight[s]
                        nl += 1
                nr = size - nl
                if nl < min_samples_leaf or nr < min_samples_leaf:
                    continue
                wl = 0.0
                for c in range(n_classes):
                    hr[c] = hist[c] - hl[c]
                    wl += hl[c]
                wr = total - wl
                score = wl * _weighted_gini(hl, wl) + wr * _weighted_gini(hr, wr)
                if score < best_score:
                    best_score = score
                    best_feat = f
                    best_thr = t

        if best_feat < 0:
            leaf_id[node] = leaf_count
            leaf_count += 1
            continue

        # partition samples[start:end] around the threshold
        i = start
        k = end - 1
        while i <= k:
            if X[samples[i], best_feat] <= best_thr:
                i += 1
            else:
                tmp = samples[i]
                samples[i] = samples[k]
                samples[k] = tmp
                k -= 1
        feature[node] = best_feat
        threshold[node] = best_thr
        # right first so the left child is popped next
        stack[top, 0] = i
        stack[top, 1] = end
        stack[top, 2] = node
        stack[top, 3] = 0
        top += 1
        stack[top, 0] = start
        stack[top, 1] = i
        stack[top, 2] = node
        stack[top, 3] = 1
        top += 1

    return (feature[:node_count].copy(), threshold[:node_count].copy(),
            left[:node_count].copy(), right[:node_count].copy(),
            leaf_id[:node_count].copy(), n_node[:node_count].copy(),
            value[:node_count].copy())


@njit(cache=True, nogil=True)
def route(X, feature, threshold, left, right, leaf_id):
    """Leaf id reached by every row of X (x <= threshold goes left)."""
    out = np.empty(X.shape[0], dtype=np.int32)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf_id[node]
    return out


@njit(cache=True, nogil=True)
def route_nodes(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int32)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, parallel=True)
def pairwise_mismatch_counts(E):
    """M x M matrix of how many trees put rows i and j in different leaves."""
    m, n_trees = E.shape
    out = np.zeros((m, m), dtype=np.int64)
    for i in prange(m):
        for j in range(m):
            c = 0
            for t in range(n_trees):
                if E[i, t] != E[j, t]:
                    c += 1
            out[i, j] = c
    return out


@njit(cache=True, nogil=True)
def shared_leaf_counts(E):
    """Per row, summed over trees, how many OTHER rows share its leaf.

    Integer result; APHD follows as 1 - counts / ((M - 1) * L).
    """
    m, n_trees = E.shape
    out = np.zeros(m, dtype=np.int64)
    for t in range(n_trees):
        col = E[:, t]
        size = 0
        for i in range(m):
            if col[i] + 1 > size:
                size = col[i] + 1
        freq = np.zeros(size, dtype=np.int64)
        for i in range(m):
            freq[col[i]] += 1
        for i in range(m):
            out[i] += freq[col[i]] - 1
    return out
