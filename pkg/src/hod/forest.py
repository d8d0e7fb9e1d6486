"""Bagged CART trees with Gini splits and per-split feature subsampling."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._accel import njit, pick
from .seeding import derive_seed

LEAF = -1


def gini(counts):
    """1 - sum p_c^2 for raw class counts."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


@njit
def _best_split_numba(X, y, idx, features, min_leaf):
    n = idx.shape[0]
    total_on = 0.0
    for j in range(n):
        total_on += y[idx[j]]
    best_score = np.inf
    best_feat = -1
    best_thr = 0.0
    vals = np.empty(n, dtype=X.dtype)
    labs = np.empty(n)
    for f in features:
        for j in range(n):
            vals[j] = X[idx[j], f]
        order = np.argsort(vals, kind="mergesort")
        sv = vals[order]
        for j in range(n):
            labs[j] = y[idx[order[j]]]
        left_on = 0.0
        for j in range(n - 1):
            left_on += labs[j]
            nl = j + 1
            if nl < min_leaf or n - nl < min_leaf or sv[j] == sv[j + 1]:
                continue
            nr = n - nl
            pl = left_on / nl
            pr = (total_on - left_on) / nr
            score = nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)
            if score < best_score:
                best_score = score
                best_feat = f
                best_thr = 0.5 * (np.float64(sv[j]) + np.float64(sv[j + 1]))
                # keep the threshold exactly representable in float32
                if np.float32(best_thr) >= sv[j + 1]:
                    best_thr = np.float64(sv[j])
    return best_feat, best_thr, best_score / n


def _best_split_numpy(X, y, idx, features, min_leaf):
    n = len(idx)
    cols = X[np.ix_(idx, features)]
    order = np.argsort(cols, axis=0, kind="mergesort")
    sv = np.take_along_axis(cols, order, axis=0)
    labs = y[idx][order]
    left_on = np.cumsum(labs, axis=0)[:-1]
    total_on = left_on[-1] + labs[-1] if n > 1 else labs.sum(axis=0)
    nl = np.arange(1, n)[:, None].astype(np.float64)
    nr = n - nl
    pl = left_on / nl
    pr = (total_on - left_on) / nr
    score = nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)
    valid = (nl >= min_leaf) & (nr >= min_leaf) & (sv[:-1] != sv[1:])
    score = np.where(valid, score, np.inf)
    if not np.isfinite(score).any():
        return -1, 0.0, np.inf
    # first minimum in (feature order, position) order, as the loop version
    flat = np.argmin(score.T)
    k, j = divmod(int(flat), n - 1)
    thr = 0.5 * (np.float64(sv[j, k]) + np.float64(sv[j + 1, k]))
    if np.float32(thr) >= sv[j + 1, k]:
        thr = np.float64(sv[j, k])
    return int(features[k]), float(thr), float(score[j, k] / n)


best_split = pick(_best_split_numba, _best_split_numpy)


@njit
def _route_numba(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for s in range(X.shape[0]):
        node = 0
        while feature[node] != -1:
            if X[s, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[s] = node
    return out


def _route_numpy(feature, threshold, left, right, X):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = np.flatnonzero(feature[node] != LEAF)
    while len(active):
        nd = node[active]
        go_left = X[active, feature[nd]] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feature[node[active]] != LEAF]
    return node


route = pick(_route_numba, _route_numpy)


@dataclass
class DecisionTree:
    feature: np.ndarray  # int32, LEAF for leaves
    threshold: np.ndarray  # float32
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    klass: np.ndarray  # uint8, meaningful at leaves
    on_fraction: np.ndarray  # float32, share of hands-on samples at the node
    max_depth: int = 12

    def __len__(self):
        return len(self.feature)

    @property
    def n_internal(self):
        return int(np.sum(self.feature != LEAF))

    @property
    def n_leaves(self):
        return len(self) - self.n_internal

    def leaves(self, X):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float32)
        return route(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X):
        return self.klass[self.leaves(X)]

    def depth(self):
        depth = np.zeros(len(self), dtype=np.int64)
        for i in range(len(self)):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


def bootstrap_sample(n, seed):
    """Indices of a same-size resample drawn with replacement."""
    if n < 1:
        raise ValueError("cannot bootstrap an empty dataset")
    return np.random.default_rng(seed).integers(0, n, size=n)


def train_tree(X, y, max_features=10, max_depth=12, min_leaf=5, seed=0, sample=None):
    """Grow one tree greedily on ``X[sample]`` (all rows by default)."""
    X = np.ascontiguousarray(X, dtype=np.float32)
    yf = np.asarray(y, dtype=np.float64)
    idx = np.arange(len(yf)) if sample is None else np.asarray(sample, dtype=np.int64)
    n_features = X.shape[1]
    max_features = min(max_features, n_features)
    rng = np.random.default_rng(seed)

    feature, threshold, left, right, klass, frac = [], [], [], [], [], []

    def new_node(rows):
        on = float(yf[rows].sum())
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(0)
        right.append(0)
        # ties go to hands-off
        klass.append(1 if 2 * on > len(rows) else 0)
        frac.append(on / len(rows))
        return len(feature) - 1

    root = new_node(idx)
    stack = [(root, idx, 0)]
    while stack:
        node, rows, depth = stack.pop()
        on = frac[node]
        if on in (0.0, 1.0) or depth >= max_depth or len(rows) < 2 * min_leaf:
            continue
        feats = np.sort(rng.choice(n_features, size=max_features, replace=False))
        f, thr, _ = best_split(X, yf, rows, feats, min_leaf)
        if f < 0:
            continue
        thr32 = np.float32(thr)
        mask = X[rows, f] <= thr32
        lrows, rrows = rows[mask], rows[~mask]
        feature[node] = int(f)
        threshold[node] = thr32
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return DecisionTree(np.asarray(feature, np.int32), np.asarray(threshold, np.float32),
                        np.asarray(left, np.int32), np.asarray(right, np.int32),
                        np.asarray(klass, np.uint8), np.asarray(frac, np.float32), max_depth)


@dataclass
class RandomForestModel:
    trees: list
    max_features: int = 10
    seed: int = 0
    input_width: int = 100

    kind = "rf"

    @property
    def size(self):
        return len(self.trees)

    def votes(self, X):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float32)
        return np.sum([t.predict(X) for t in self.trees], axis=0)

    def predict_proba(self, X):
        return self.votes(X) / len(self.trees)

    def predict(self, X):
        # strict majority, ties to hands-off
        return (2 * self.votes(X) > len(self.trees)).astype(np.uint8)

    def predict_proba_one(self, x):
        return float(self.predict_proba(x[None, :])[0])

    def decide_one(self, p):
        return 2 * p * len(self.trees) > len(self.trees)


def train_forest(X, y, n_estimators=10, max_features=10, max_depth=12, min_leaf=5, seed=0,
                 threads=None):
    """Bagged forest; tree ``t`` draws from ``derive_seed(seed, "tree", t)``."""
    X = np.ascontiguousarray(X, dtype=np.float32)
    y = np.asarray(y)
    if threads is None:
        threads = int(os.environ.get("HOD_THREADS", "1"))

    def grow(t):
        tseed = derive_seed(seed, "tree", t)
        sample = bootstrap_sample(len(y), derive_seed(tseed, "bootstrap"))
        return train_tree(X, y, max_features, max_depth, min_leaf, derive_seed(tseed, "split"), sample)

    if threads > 1 and n_estimators > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(grow, range(n_estimators)))
    else:
        trees = [grow(t) for t in range(n_estimators)]
    return RandomForestModel(trees, max_features, seed, X.shape[1])


def rf_predict(model, window):
    """(label, vote fraction) for one window."""
    x = np.asarray(getattr(window, "values", window), dtype=np.float32)
    frac = float(model.predict_proba(x[None, :])[0])
    return int(model.predict(x[None, :])[0]), frac
