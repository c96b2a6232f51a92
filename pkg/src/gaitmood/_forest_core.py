"""Compiled kernels for CART growth and forest voting.

Trees are grown depth-first with exact gini split search over a random
feature subset per node. All randomness comes from an inline splitmix64
stream (same constants as :mod:`gaitmood.rng`) seeded per tree, so growth is
reproducible regardless of scheduling. Nodes are stored in flat arrays:
``feature < 0`` marks a leaf whose class is in ``leaf``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _next64(state):
    state = state + _GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def grow_tree(X, y, n_classes, seed, mtry, max_depth, min_samples_leaf):
    """Grow one CART on a bootstrap resample of (X, y).

    Returns (feature, threshold, left, right, leaf, importances, n_nodes).
    ``importances[f]`` accumulates (node_fraction * gini decrease) over the
    splits on feature ``f``, relative to the bootstrap sample size.
    """
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    leaf = np.full(cap, -1, np.int64)
    importances = np.zeros(d, np.float64)

    state = seed
    idx = np.empty(n, np.int64)
    for i in range(n):
        state, z = _next64(state)
        idx[i] = np.int64(z % np.uint64(n))

    # stack rows: (start, end, node, depth)
    stack = np.empty((2 * n + 2, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    counts = np.zeros(n_classes, np.int64)
    left_counts = np.zeros(n_classes, np.int64)
    right_counts = np.zeros(n_classes, np.int64)
    feature_pool = np.empty(d, np.int64)

    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        node = stack[top, 2]
        depth = stack[top, 3]
        m = end - start

        counts[:] = 0
        for i in range(start, end):
            counts[y[idx[i]]] += 1
        majority = 0
        max_count = np.int64(-1)
        n_present = 0
        sum_sq = 0.0
        for c in range(n_classes):
            if counts[c] > max_count:
                max_count = counts[c]
                majority = c
            if counts[c] > 0:
                n_present += 1
            sum_sq += counts[c] * counts[c]

        if n_present <= 1 or m < 2 * min_samples_leaf or (max_depth >= 0 and depth >= max_depth):
            leaf[node] = majority
            continue

        parent_gini = 1.0 - sum_sq / (m * m)
        for j in range(d):
            feature_pool[j] = j
        best_gain = 0.0
        best_feature = -1
        best_threshold = 0.0
        for j in range(mtry):
            state, z = _next64(state)
            pick = j + np.int64(z % np.uint64(d - j))
            f = feature_pool[pick]
            feature_pool[pick] = feature_pool[j]
            feature_pool[j] = f

            values = np.empty(m, np.float64)
            for i in range(m):
                values[i] = X[idx[start + i], f]
            order = np.argsort(values, kind="mergesort")

            left_counts[:] = 0
            for c in range(n_classes):
                right_counts[c] = counts[c]
            sum_sq_left = 0.0
            sum_sq_right = sum_sq
            for i in range(m - 1):
                c = y[idx[start + order[i]]]
                sum_sq_left += 2.0 * left_counts[c] + 1.0
                sum_sq_right -= 2.0 * right_counts[c] - 1.0
                left_counts[c] += 1
                right_counts[c] -= 1
                n_left = i + 1
                n_right = m - n_left
                if n_left < min_samples_leaf or n_right < min_samples_leaf:
                    continue
                v = values[order[i]]
                v_next = values[order[i + 1]]
                if v_next <= v:
                    continue
                gini_left = 1.0 - sum_sq_left / (n_left * n_left)
                gini_right = 1.0 - sum_sq_right / (n_right * n_right)
                gain = parent_gini - (n_left * gini_left + n_right * gini_right) / m
                if gain > best_gain:
                    best_gain = gain
                    best_feature = f
                    mid = 0.5 * (v + v_next)
                    # adjacent floats can round the midpoint onto v_next;
                    # clamp so the partition matches the scanned boundary
                    best_threshold = v if mid >= v_next else mid

        if best_feature < 0:
            leaf[node] = majority
            continue

        lo = start
        hi = end - 1
        while lo <= hi:
            if X[idx[lo], best_feature] <= best_threshold:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1

        feature[node] = best_feature
        threshold[node] = best_threshold
        importances[best_feature] += (m / n) * best_gain
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top, 0] = start
        stack[top, 1] = lo
        stack[top, 2] = n_nodes
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lo
        stack[top, 1] = end
        stack[top, 2] = n_nodes + 1
        stack[top, 3] = depth + 1
        top += 1
        n_nodes += 2

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        leaf[:n_nodes],
        importances,
        n_nodes,
    )


@njit(cache=True)
def forest_votes(X, feature, threshold, left, right, leaf, offsets, n_classes):
    """Per-row class-vote counts over all trees; children are global node ids."""
    m = X.shape[0]
    n_trees = offsets.shape[0] - 1
    votes = np.zeros((m, n_classes), np.int64)
    for i in range(m):
        for t in range(n_trees):
            node = offsets[t]
            while leaf[node] < 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            votes[i, leaf[node]] += 1
    return votes
