"""Numba kernels for the hot loops: batched empirical CRPS, the KNN
hyperparameter sweep, CART forest growing/traversal, and mixture risk
evaluation over stacked per-point candidate supports.

Everything here is deterministic: tree randomness comes from an explicit
splitmix64 state derived from (seed, tree index), never from global RNGs,
so identical seeds give bit-identical forests on any platform.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _rand_below(state, bound):
    state, z = _splitmix64(state)
    return state, np.int64(z % np.uint64(bound))


@njit(cache=True)
def crps_sorted_weighted(atoms, weights, y):
    """CRPS of sum_i w_i delta(atoms_i) at y; atoms sorted, weights sum to 1.

    Prefix-sum form of the discrete closed formula; zero weights are allowed
    and contribute nothing.
    """
    acc = 0.0
    cum = 0.0
    for i in range(atoms.size):
        w = weights[i]
        mid = cum + 0.5 * w
        cum += w
        if w == 0.0:
            continue
        ind = 1.0 if y < atoms[i] else 0.0
        acc += w * (atoms[i] - y) * (ind - mid)
    out = 2.0 * acc
    return out if out > 0.0 else 0.0


@njit(cache=True)
def crps_rows_shared_atoms(atoms, weight_rows, ys):
    """CRPS per row for weight rows over a shared sorted atom vector."""
    n_rows = weight_rows.shape[0]
    out = np.empty(n_rows)
    for r in range(n_rows):
        out[r] = crps_sorted_weighted(atoms, weight_rows[r], ys[r])
    return out


@njit(cache=True)
def crps_ragged(atoms_flat, weights_flat, offsets, ys):
    """CRPS per point for ragged (atoms, weights) slices; atoms sorted within each slice."""
    n = ys.size
    out = np.empty(n)
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        out[i] = crps_sorted_weighted(atoms_flat[lo:hi], weights_flat[lo:hi], ys[i])
    return out


@njit(cache=True)
def knn_sweep_risks(neighbor_y, ys, ks):
    """Mean validation CRPS for every k in ks.

    ``neighbor_y[q]`` holds the responses of query q's nearest neighbors in
    distance order (closest first), with at least max(ks) columns. Windows
    grow by sorted insertion, so the whole sweep costs O(n_q * kmax^2).
    """
    n_q, kmax = neighbor_y.shape
    n_k = ks.size
    acc = np.zeros(n_k)
    window = np.empty(kmax)
    for q in range(n_q):
        y = ys[q]
        pos = 0
        for k in range(1, kmax + 1):
            v = neighbor_y[q, k - 1]
            j = pos
            while j > 0 and window[j - 1] > v:
                window[j] = window[j - 1]
                j -= 1
            window[j] = v
            pos += 1
            idx = -1
            for t in range(n_k):
                if ks[t] == k:
                    idx = t
                    break
            if idx >= 0:
                w = 1.0 / k
                s = 0.0
                for i in range(k):
                    ind = 1.0 if y < window[i] else 0.0
                    s += (window[i] - y) * (ind - (i + 0.5) * w)
                val = 2.0 * w * s
                acc[idx] += val if val > 0.0 else 0.0
    return acc / n_q


@njit(cache=True)
def mixture_risk(lam, atoms_flat, weight_stack, offsets, ys):
    """Mean CRPS of the convex mixture with weights lam over stacked points.

    ``weight_stack`` has one row per candidate, aligned with ``atoms_flat``
    (sorted within each point's slice); column sums within a slice equal 1
    per candidate, so the mixed weights are again a unit-mass empirical.
    """
    n = ys.size
    m = weight_stack.shape[0]
    total = 0.0
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        y = ys[i]
        acc = 0.0
        cum = 0.0
        for j in range(lo, hi):
            w = 0.0
            for c in range(m):
                w += lam[c] * weight_stack[c, j]
            mid = cum + 0.5 * w
            cum += w
            if w == 0.0:
                continue
            a = atoms_flat[j]
            ind = 1.0 if y < a else 0.0
            acc += w * (a - y) * (ind - mid)
        val = 2.0 * acc
        if val > 0.0:
            total += val
    return total / n


# ---------------------------------------------------------------------------
# CART forest: growing, traversal, leaf weights
# ---------------------------------------------------------------------------


@njit(cache=True)
def _sample_without_replacement(n, size, state, out):
    # partial Fisher-Yates over 0..n-1, first `size` entries kept
    perm = np.arange(n)
    for i in range(size):
        state, j = _rand_below(state, n - i)
        j += i
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
        out[i] = perm[i]
    return state


@njit(cache=True)
def grow_forest(X, Y, num_trees, mtry, n_inbag, min_node, seed):
    """Grow a forest of variance-reduction CART trees on subsamples.

    Per tree: ``n_inbag`` points drawn without replacement; at each node
    ``mtry`` candidate features drawn without replacement; the split
    maximizes the variance reduction of Y, tie-broken by lowest feature
    index then lowest threshold; growth stops below 2*min_node points or on
    pure nodes. Returns packed arrays (one row per tree):

    feature  -1 marks a leaf, else the split feature
    thresh   split threshold (midpoint of the optimal gap)
    left/right  child node ids
    leaf_lo/leaf_hi  member slice of a leaf in ``members``
    members  in-bag training indices grouped by leaf
    n_nodes  nodes actually used per tree
    """
    n, d = X.shape
    max_nodes = 2 * n_inbag + 1
    feature = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    thresh = np.zeros((num_trees, max_nodes))
    left = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    right = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    leaf_lo = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    leaf_hi = np.full((num_trees, max_nodes), -1, dtype=np.int32)
    members = np.empty((num_trees, n_inbag), dtype=np.int32)
    n_nodes = np.zeros(num_trees, dtype=np.int32)

    buf = np.empty(n_inbag, dtype=np.int64)
    tmp = np.empty(n_inbag, dtype=np.int64)
    stack_node = np.empty(max_nodes, dtype=np.int64)
    stack_lo = np.empty(max_nodes, dtype=np.int64)
    stack_hi = np.empty(max_nodes, dtype=np.int64)
    feats = np.empty(d, dtype=np.int64)
    xv = np.empty(n_inbag)
    yv = np.empty(n_inbag)

    for b in range(num_trees):
        state = np.uint64(seed)
        state, _ = _splitmix64(state)
        state = (state ^ np.uint64(b + 1)) & _MASK64
        state, _ = _splitmix64(state)

        state = _sample_without_replacement(n, n_inbag, state, buf)
        top = 0
        stack_node[top] = 0
        stack_lo[top] = 0
        stack_hi[top] = n_inbag
        top += 1
        next_node = 1

        while top > 0:
            top -= 1
            node = stack_node[top]
            lo = stack_lo[top]
            hi = stack_hi[top]
            size = hi - lo

            sum_y = 0.0
            sum_y2 = 0.0
            for i in range(lo, hi):
                v = Y[buf[i]]
                sum_y += v
                sum_y2 += v * v
            sse_parent = sum_y2 - sum_y * sum_y / size

            make_leaf = size < 2 * min_node or sse_parent <= 1e-12 * max(1.0, sum_y2)
            best_gain = 0.0
            best_feat = -1
            best_thresh = 0.0
            best_nl = 0

            if not make_leaf:
                # mtry distinct features, then visit in ascending index order
                state = _sample_without_replacement(d, mtry, state, feats[:mtry])
                for i in range(1, mtry):
                    key = feats[i]
                    j = i
                    while j > 0 and feats[j - 1] > key:
                        feats[j] = feats[j - 1]
                        j -= 1
                    feats[j] = key
                for fi in range(mtry):
                    f = feats[fi]
                    for i in range(size):
                        xv[i] = X[buf[lo + i], f]
                    order = np.argsort(xv[:size])
                    for i in range(size):
                        yv[i] = Y[buf[lo + order[i]]]
                    sl = 0.0
                    for i in range(size - 1):
                        sl += yv[i]
                        a = xv[order[i]]
                        bb = xv[order[i + 1]]
                        if bb <= a:
                            continue
                        nl = i + 1
                        nr = size - nl
                        sr = sum_y - sl
                        gain = sl * sl / nl + sr * sr / nr - sum_y * sum_y / size
                        if nl >= min_node and nr >= min_node and gain > best_gain:
                            best_gain = gain
                            best_feat = f
                            best_thresh = a + 0.5 * (bb - a)
                            best_nl = nl
                if best_feat < 0:
                    make_leaf = True

            if make_leaf:
                feature[b, node] = -1
                leaf_lo[b, node] = lo
                leaf_hi[b, node] = hi
                for i in range(lo, hi):
                    members[b, i] = buf[i]
            else:
                # stable partition on the winning split
                nl = 0
                nr = 0
                for i in range(lo, hi):
                    if X[buf[i], best_feat] <= best_thresh:
                        tmp[nl] = buf[i]
                        nl += 1
                    else:
                        tmp[best_nl + nr] = buf[i]
                        nr += 1
                for i in range(size):
                    buf[lo + i] = tmp[i]
                feature[b, node] = best_feat
                thresh[b, node] = best_thresh
                lchild = next_node
                rchild = next_node + 1
                next_node += 2
                left[b, node] = lchild
                right[b, node] = rchild
                stack_node[top] = lchild
                stack_lo[top] = lo
                stack_hi[top] = lo + best_nl
                top += 1
                stack_node[top] = rchild
                stack_lo[top] = lo + best_nl
                stack_hi[top] = hi
                top += 1
        n_nodes[b] = next_node
    return feature, thresh, left, right, leaf_lo, leaf_hi, members, n_nodes


@njit(cache=True, inline="always")
def _find_leaf(feature, thresh, left, right, b, x):
    node = 0
    while feature[b, node] >= 0:
        if x[feature[b, node]] <= thresh[b, node]:
            node = left[b, node]
        else:
            node = right[b, node]
    return node


@njit(cache=True)
def forest_weights_dense(feature, thresh, left, right, leaf_lo, leaf_hi, members, Xq, rank, n_train):
    """Random-forest weights for each query row, columns in Y-sorted order.

    w[q, rank[i]] = (1/B) sum_b 1{i in leaf_b(q)} / |leaf_b(q)| over in-bag
    members only; out-of-bag points get zero weight in that tree.
    """
    num_trees = feature.shape[0]
    n_q = Xq.shape[0]
    W = np.zeros((n_q, n_train))
    inv_b = 1.0 / num_trees
    for q in range(n_q):
        x = Xq[q]
        for b in range(num_trees):
            node = _find_leaf(feature, thresh, left, right, b, x)
            lo = leaf_lo[b, node]
            hi = leaf_hi[b, node]
            lw = inv_b / (hi - lo)
            for j in range(lo, hi):
                W[q, rank[members[b, j]]] += lw
    return W
