"""Kernels, kernel matrices, and the empirical MMD estimator.

Two kernel families are supported: the Gauss (RBF) kernel, with an optional
median-heuristic bandwidth, and the moment-forest similarity: a bagged
ensemble of regression trees trained to predict arrival time from features,
where the similarity of two points is the fraction of trees placing them in
the same leaf. The forest similarity is an average of block-indicator Gram
matrices and therefore positive semi-definite by construction.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

_MEDIAN_SUBSAMPLE_CAP = 2048


@dataclass(frozen=True)
class RbfKernel:
    """Gauss kernel exp(-gamma * ||x - y||^2); gamma=None uses the median heuristic."""

    gamma: float | None = None

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class MomentForestKernel:
    """Configuration of the arrival-time regression forest similarity."""

    n_trees: int = 32
    max_depth: int = 4
    subsample_fraction: float = 0.632
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.subsample_fraction <= 1:
            raise ValueError(f"subsample_fraction must lie in (0, 1], got {self.subsample_fraction}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")


KernelConfig = Union[RbfKernel, MomentForestKernel]


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric PSD similarity matrix over one window of samples."""

    values: np.ndarray
    window_times: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        t = np.asarray(self.window_times)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"kernel matrix must be square, got shape {v.shape}")
        if t.shape != (v.shape[0],):
            raise ValueError("window_times must have one entry per row")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "window_times", t)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2) for two single points."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    d = x - y
    return float(np.exp(-gamma * (d @ d)))


def median_heuristic_gamma(x: np.ndarray) -> float:
    """1 / median of pairwise squared distances (distinct pairs only).

    Falls back to 1.0 when the median distance is zero. Inputs larger than
    a fixed cap are strided down deterministically before taking the median.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 samples")
    if x.shape[0] > _MEDIAN_SUBSAMPLE_CAP:
        step = int(np.ceil(x.shape[0] / _MEDIAN_SUBSAMPLE_CAP))
        x = x[::step]
    sq = cdist(x, x, "sqeuclidean")
    med = float(np.median(sq[np.triu_indices(x.shape[0], k=1)]))
    if med <= 0:
        return 1.0
    return 1.0 / med


def resolve_rbf(config: RbfKernel, x: np.ndarray) -> RbfKernel:
    """Pin the median-heuristic bandwidth of an RBF config on the given data."""
    if config.gamma is not None:
        return config
    return RbfKernel(gamma=median_heuristic_gamma(x))


def rbf_cross_matrix(x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(x, y, "sqeuclidean"))


class MomentTree:
    """Axis-aligned CART regression tree mapping feature vectors to leaf ids.

    Grown depth-first with variance-reduction splits on a scalar target
    (the arrival time). Node arrays: `feature` is -1 at leaves, `children`
    holds (left, right) node indices, `leaf_id` numbers the leaves.
    """

    def __init__(self, feature, threshold, children, leaf_id, n_leaves):
        self.feature = feature
        self.threshold = threshold
        self.children = children
        self.leaf_id = leaf_id
        self.n_leaves = n_leaves

    @classmethod
    def fit(cls, x: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int) -> "MomentTree":
        feature: list[int] = []
        threshold: list[float] = []
        children: list[tuple[int, int]] = []
        leaf_id: list[int] = []
        n_leaves = 0

        def grow(idx: np.ndarray, depth: int) -> int:
            nonlocal n_leaves
            node = len(feature)
            feature.append(-1)
            threshold.append(np.nan)
            children.append((-1, -1))
            leaf_id.append(-1)
            split = None
            if depth < max_depth and idx.size >= 2 * min_leaf:
                split = _best_split(x, y, idx, min_leaf)
            if split is None:
                leaf_id[node] = n_leaves
                n_leaves += 1
                return node
            f, thr = split
            mask = x[idx, f] <= thr
            feature[node] = f
            threshold[node] = thr
            left = grow(idx[mask], depth + 1)
            right = grow(idx[~mask], depth + 1)
            children[node] = (left, right)
            return node

        grow(np.arange(x.shape[0]), 0)
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=float),
            np.array(children, dtype=np.int64),
            np.array(leaf_id, dtype=np.int64),
            n_leaves,
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf id for every row of x."""
        x = np.asarray(x, dtype=float)
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            cur = node[rows]
            go_left = x[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.children[cur, 0], self.children[cur, 1])
            active = self.feature[node] >= 0
        return self.leaf_id[node]


def _best_split(x: np.ndarray, y: np.ndarray, idx: np.ndarray, min_leaf: int):
    """Best (feature, threshold) by total variance reduction, or None.

    Ties break toward the lower feature index and the leftmost threshold.
    """
    n = idx.size
    ys_all = y[idx]
    total_sum = ys_all.sum()
    total_sq = float(ys_all @ ys_all)
    parent_sse = total_sq - total_sum * total_sum / n
    if parent_sse <= 1e-12 * max(total_sq, 1.0):
        return None
    best_gain = 0.0
    best = None
    positions = np.arange(min_leaf - 1, n - min_leaf)
    for f in range(x.shape[1]):
        order = np.argsort(x[idx, f], kind="stable")
        xs = x[idx[order], f]
        ys = ys_all[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        nl = positions + 1.0
        nr = n - nl
        sse_l = csq[positions] - csum[positions] ** 2 / nl
        sse_r = (total_sq - csq[positions]) - (total_sum - csum[positions]) ** 2 / nr
        gain = parent_sse - sse_l - sse_r
        gain[xs[positions] >= xs[positions + 1]] = -np.inf
        j = int(np.argmax(gain))
        g = float(gain[j])
        if g > best_gain + 1e-12 * max(parent_sse, 1.0):
            best_gain = g
            pos = positions[j]
            best = (f, float((xs[pos] + xs[pos + 1]) / 2.0))
    return best


@dataclass(frozen=True)
class MomentForest:
    """Bagged MomentTrees trained to predict arrival time from features."""

    trees: tuple[MomentTree, ...]
    n_features: int

    def leaf_table(self, x: np.ndarray) -> np.ndarray:
        """(n_trees, n) leaf ids for the rows of x."""
        x = self._check(x)
        return np.stack([t.apply(x) for t in self.trees])

    def similarity_matrix(self, x: np.ndarray) -> np.ndarray:
        leaves = self.leaf_table(x)
        n = leaves.shape[1]
        k = np.zeros((n, n))
        for row in leaves:
            k += row[:, None] == row[None, :]
        k /= len(self.trees)
        return k

    def cross_similarity(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        lx = self.leaf_table(x)
        ly = self.leaf_table(y)
        k = np.zeros((lx.shape[1], ly.shape[1]))
        for rx, ry in zip(lx, ly):
            k += rx[:, None] == ry[None, :]
        return k / len(self.trees)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: forest trained on {self.n_features} features, got {x.shape[1]}"
            )
        return x


def train_moment_forest(x: np.ndarray, times: np.ndarray, config: MomentForestKernel) -> MomentForest:
    """Fit the forest on one window; deterministic given config.seed.

    Each tree sees an independent bootstrap-style subsample of size
    round(subsample_fraction * n), drawn with replacement. Windows with
    no usable split (all-identical features) give single-leaf trees.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(times, dtype=float)
    n = x.shape[0]
    if n < 2 * config.min_leaf:
        raise ValueError(
            f"window of {n} samples is too small for min_leaf={config.min_leaf}"
        )
    n_sub = max(2, int(round(config.subsample_fraction * n)))
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, n, size=n_sub)
        trees.append(MomentTree.fit(x[idx], y[idx], config.max_depth, config.min_leaf))
    return MomentForest(trees=tuple(trees), n_features=x.shape[1])


def forest_similarity(forest: MomentForest, x: np.ndarray, y: np.ndarray) -> float:
    """Fraction of trees that put x and y in the same leaf."""
    return float(forest.cross_similarity(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


def compute_kernel_matrix(x: np.ndarray, times: np.ndarray | None = None,
                          config: KernelConfig = RbfKernel()) -> KernelMatrix:
    """Similarity matrix of one window under the configured kernel.

    For the moment forest the forest is trained on this window first. The
    result has an exactly symmetric value array and an exactly unit diagonal.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("window must be non-empty")
    if times is None:
        times = np.arange(x.shape[0])
    times = np.asarray(times)
    if x.shape[0] == 1:
        return KernelMatrix(values=np.ones((1, 1)), window_times=times)
    if isinstance(config, RbfKernel):
        gamma = resolve_rbf(config, x).gamma
        k = rbf_cross_matrix(x, x, gamma)
        k = (k + k.T) / 2.0
    elif isinstance(config, MomentForestKernel):
        forest = train_moment_forest(x, times, config)
        k = forest.similarity_matrix(x)
    else:
        raise TypeError(f"unknown kernel config {type(config).__name__}")
    np.fill_diagonal(k, 1.0)
    return KernelMatrix(values=k, window_times=times)


def empirical_mmd2(k, idx_a: Sequence[int], idx_b: Sequence[int]) -> float:
    """Biased (V-statistic) squared-MMD estimate between two index sets.

    mean(K[a, a]) - 2 mean(K[a, b]) + mean(K[b, b]), clipped at zero.
    """
    values = k.values if isinstance(k, KernelMatrix) else np.asarray(k, dtype=float)
    idx_a = np.asarray(idx_a, dtype=np.int64)
    idx_b = np.asarray(idx_b, dtype=np.int64)
    if idx_a.size == 0 or idx_b.size == 0:
        raise ValueError("index sets must be non-empty")
    kaa = values[np.ix_(idx_a, idx_a)].mean()
    kab = values[np.ix_(idx_a, idx_b)].mean()
    kbb = values[np.ix_(idx_b, idx_b)].mean()
    return float(max(kaa - 2.0 * kab + kbb, 0.0))


def batch_kernel_config(config: KernelConfig, seed: int) -> KernelConfig:
    """Rebind the stochastic part of a kernel config to a derived seed."""
    if isinstance(config, MomentForestKernel):
        return dataclasses.replace(config, seed=int(seed))
    return config


def stream_kernel_function(x: np.ndarray, times: np.ndarray, config: KernelConfig):
    """Pairwise kernel evaluator (a, b) -> matrix, pinned on one whole stream.

    RBF resolves its median-heuristic bandwidth on the full data; the moment
    forest trains once on (x, times). Useful when many windows of one stream
    must be compared under a single consistent kernel.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(config, RbfKernel):
        gamma = resolve_rbf(config, x).gamma
        return lambda a, b: rbf_cross_matrix(a, b, gamma)
    if isinstance(config, MomentForestKernel):
        forest = train_moment_forest(x, times, config)
        return forest.cross_similarity
    raise TypeError(f"unknown kernel config {type(config).__name__}")


def pool_kernel_function(pools: Sequence[np.ndarray], config: KernelConfig):
    """Pairwise kernel evaluator (a, b) -> matrix, pinned on a set of pools.

    RBF resolves its median-heuristic bandwidth over the pooled samples; the
    moment forest trains once on the concatenation, with the pool index
    standing in for arrival time.
    """
    pools = [np.atleast_2d(np.asarray(p, dtype=float)) for p in pools]
    if isinstance(config, RbfKernel):
        gamma = resolve_rbf(config, np.vstack(pools)).gamma
        return lambda a, b: rbf_cross_matrix(a, b, gamma)
    if isinstance(config, MomentForestKernel):
        x = np.vstack(pools)
        t = np.repeat(np.arange(len(pools)), [p.shape[0] for p in pools])
        forest = train_moment_forest(x, t, config)
        return forest.cross_similarity
    raise TypeError(f"unknown kernel config {type(config).__name__}")
