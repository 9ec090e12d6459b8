"""Greedy variance-reduction regression trees (CART), numba-compiled.

Trees are stored as flat node arrays in preorder. A node with
``feature == -1`` is a leaf; otherwise rows with ``x[feature] <= threshold``
go left.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import EmptyTrainingSet

LEAF = -1


@dataclass(frozen=True)
class TreeNode:
    """Flat preorder representation of one fitted tree."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f != LEAF}

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _predict_tree(self.feature, self.threshold, self.left, self.right, self.value, X)

    def preorder(self) -> list[list[float]]:
        """``[feature, threshold]`` for splits and ``[-1, value]`` for leaves."""
        x = np.where(self.feature == LEAF, self.value, self.threshold)
        return [[f, v] for f, v in zip(self.feature.tolist(), x.tolist())]

    @classmethod
    def from_preorder(cls, nodes: list[list[float]]) -> "TreeNode":
        n = len(nodes)
        feature = np.full(n, LEAF, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros(n)

        def walk(i: int) -> int:
            f, x = nodes[i]
            if int(f) == LEAF:
                value[i] = x
                return i + 1
            feature[i], threshold[i] = int(f), x
            left[i] = i + 1
            nxt = walk(i + 1)
            right[i] = nxt
            return walk(nxt)

        if walk(0) != n:
            raise ValueError("malformed preorder node list")
        return cls(feature, threshold, left, right, value, np.zeros(n, dtype=np.int64))


@njit(cache=True)
def presort(X, idx):
    """Row ids of ``idx`` ordered by each feature (stable), one row per feature."""
    p = X.shape[1]
    n = idx.shape[0]
    out = np.empty((p, n), dtype=np.int64)
    xs = np.empty(n)
    for f in range(p):
        for r in range(n):
            xs[r] = X[idx[r], f]
        o = np.argsort(xs, kind="mergesort")
        for r in range(n):
            out[f, r] = idx[o[r]]
    return out


@njit(cache=True)
def expand_presort(order, counts):
    """``order`` (from ``presort``) with each row repeated ``counts[row]`` times."""
    p, n = order.shape
    total = 0
    for r in range(n):
        total += counts[order[0, r]]
    out = np.empty((p, total), dtype=np.int64)
    for f in range(p):
        k = 0
        for r in range(n):
            row = order[f, r]
            for _ in range(counts[row]):
                out[f, k] = row
                k += 1
    return out


@njit(cache=True)
def _build_tree(X, y, idx, by_feature, max_depth, min_samples_split, n_candidates, feature_noise):
    # by_feature[f, start:end] lists the node's rows sorted by feature f; every
    # split partitions each list stably, so no node ever sorts again
    n = idx.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)

    idx = idx.copy()
    by_feature = by_feature.copy()
    goes_left = np.zeros(X.shape[0], dtype=np.bool_)
    scratch = np.empty(n, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_parent = np.empty(cap, dtype=np.int64)
    st_left = np.empty(cap, dtype=np.bool_)
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_parent[0] = -1
    st_left[0] = True
    top = 1
    node_count = 0
    all_features = np.arange(p)

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        parent = st_parent[top]
        nid = node_count
        node_count += 1
        if parent >= 0:
            if st_left[top]:
                left[parent] = nid
            else:
                right[parent] = nid

        m = end - start
        total = 0.0
        for r in range(start, end):
            total += y[idx[r]]
        mean = total / m
        value[nid] = mean
        count[nid] = m
        if depth >= max_depth or m < min_samples_split:
            continue
        parent_sse = 0.0
        centered_total = 0.0
        for r in range(start, end):
            d = y[idx[r]] - mean
            parent_sse += d * d
            centered_total += d
        if parent_sse <= 0.0:
            continue

        if n_candidates < p:
            order = np.argsort(feature_noise[nid])
            feats = np.sort(order[:n_candidates])
        else:
            feats = all_features

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for f in feats:
            csum = 0.0
            b = X[by_feature[f, start], f]
            for i in range(m - 1):
                row = by_feature[f, start + i]
                csum += y[row] - mean
                a = b
                b = X[by_feature[f, start + i + 1], f]
                if a < b:
                    nl = i + 1
                    nr = m - nl
                    sr = centered_total - csum
                    gain = csum * csum / nl + sr * sr / nr - centered_total * centered_total / m
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        thr = 0.5 * (a + b)
                        if thr >= b:
                            thr = a
                        best_thr = thr
        if best_f < 0 or best_gain <= 1e-12 * parent_sse:
            continue

        # stable partitions: left rows first
        nl = 0
        for r in range(start, end):
            row = idx[r]
            goes_left[row] = X[row, best_f] <= best_thr
            if goes_left[row]:
                idx[start + nl] = row
                nl += 1
            else:
                scratch[r - start - nl] = row
        for r in range(m - nl):
            idx[start + nl + r] = scratch[r]
        for f in range(p):
            k = 0
            for r in range(start, end):
                row = by_feature[f, r]
                if goes_left[row]:
                    by_feature[f, start + k] = row
                    k += 1
                else:
                    scratch[r - start - k] = row
            for r in range(m - nl):
                by_feature[f, start + nl + r] = scratch[r]
        feature[nid] = best_f
        threshold[nid] = best_thr
        # right pushed first so the left subtree is numbered first (preorder)
        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        st_parent[top] = nid
        st_left[top] = False
        top += 1
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        st_parent[top] = nid
        st_left[top] = True
        top += 1

    return (
        feature[:node_count].copy(),
        threshold[:node_count].copy(),
        left[:node_count].copy(),
        right[:node_count].copy(),
        value[:node_count].copy(),
        count[:node_count].copy(),
    )


@njit(cache=True)
def _predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] != -1:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


@njit(cache=True)
def _predict_forest(feature, threshold, left, right, value, roots, X):
    """Per-tree outputs (tree x row) for trees packed back to back."""
    out = np.empty((roots.shape[0], X.shape[0]))
    for t in range(roots.shape[0]):
        root = roots[t]
        for r in range(X.shape[0]):
            node = root
            while feature[node] != -1:
                if X[r, feature[node]] <= threshold[node]:
                    node = root + left[node]
                else:
                    node = root + right[node]
            out[t, r] = value[node]
    return out


def fit_cart(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_samples_split: int,
    feature_subset_size: int | None = None,
    rng: np.random.Generator | None = None,
    sample_idx: np.ndarray | None = None,
    sorted_rows: np.ndarray | None = None,
) -> TreeNode:
    """Fit one regression tree.

    At each node a uniform random subset of ``feature_subset_size`` features is
    searched (all features when ``None``). Split points are midpoints of sorted
    unique values; ties keep the lowest feature index, then the lowest
    threshold. ``sample_idx`` (e.g. a bootstrap draw) selects training rows
    with repetition. ``sorted_rows`` is ``presort(X, idx)``, passed in when
    many trees share the same rows.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
        raise EmptyTrainingSet("fit_cart needs at least one row with a matching target")
    if min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")
    p = X.shape[1]
    k = p if feature_subset_size is None else int(feature_subset_size)
    if not 1 <= k <= p:
        raise ValueError(f"feature_subset_size {k} outside [1, {p}]")
    idx = np.arange(len(X), dtype=np.int64) if sample_idx is None else np.asarray(sample_idx, dtype=np.int64)
    if k < p:
        if rng is None:
            raise ValueError("a random generator is required for feature subsampling")
        noise = rng.random((2 * len(idx) + 1, p))
    else:
        noise = np.zeros((1, p))
    if sorted_rows is None:
        sorted_rows = presort(X, idx)
    return TreeNode(*_build_tree(X, y, idx, sorted_rows, int(max_depth), int(min_samples_split), k, noise))
