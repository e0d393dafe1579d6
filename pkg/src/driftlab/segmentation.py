"""Time-axis segmentation of eigenvector rows by a leaf-budgeted tree.

The partition step of the detection pipeline: fit a regression tree on the
single covariate "arrival time" with multi-dimensional targets (the
eigenvector rows), growing leaves best-first under a leaf budget. Leaf
boundaries are the candidate change points; the number of leaves is chosen
by repeated random train/test splits scored with R^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeTree:
    """Piecewise-constant fit over time with k leaves and k-1 thresholds."""

    thresholds: np.ndarray
    leaf_means: np.ndarray
    snap_times: np.ndarray

    @property
    def n_leaves(self) -> int:
        return self.leaf_means.shape[0]

    def predict(self, times: np.ndarray) -> np.ndarray:
        leaf = np.searchsorted(self.thresholds, np.asarray(times), side="right")
        return self.leaf_means[leaf]


@dataclass(frozen=True)
class Segmentation:
    """Selected change points plus the cross-validation trace behind them."""

    change_points: tuple[int, ...]
    k: int
    cv_scores: tuple[float, ...]


def _sse_table(targets: np.ndarray):
    """Prefix sums of targets and squared targets for O(1) SSE lookups."""
    n, d = targets.shape
    c1 = np.zeros((n + 1, d))
    c2 = np.zeros((n + 1, d))
    np.cumsum(targets, axis=0, out=c1[1:])
    np.cumsum(targets * targets, axis=0, out=c2[1:])
    return c1, c2


def _interval_best_split(times, c1, c2, lo: int, hi: int):
    """Best boundary inside [lo, hi): (gain, boundary) or None.

    Boundaries are only allowed between distinct consecutive time values;
    ties break toward the leftmost boundary.
    """
    m = hi - lo
    if m < 2:
        return None
    s = c1[hi] - c1[lo]
    q = c2[hi] - c2[lo]
    parent = (q - s * s / m).sum()
    b = np.arange(lo + 1, hi)
    nl = (b - lo).astype(float)
    nr = (hi - b).astype(float)
    sl = c1[b] - c1[lo]
    ql = c2[b] - c2[lo]
    sse_l = (ql - sl * sl / nl[:, None]).sum(axis=1)
    sse_r = ((q - ql) - (s - sl) * (s - sl) / nr[:, None]).sum(axis=1)
    gain = parent - sse_l - sse_r
    gain[times[b - 1] >= times[b]] = -np.inf
    j = int(np.argmax(gain))
    if not np.isfinite(gain[j]):
        return None
    return float(gain[j]), int(b[j])


def _grow_path(times: np.ndarray, targets: np.ndarray, max_leaves: int):
    """Best-first boundary sequence; prefix j gives the (j+1)-leaf partition."""
    n = times.shape[0]
    c1, c2 = _sse_table(targets)
    # Gains below float noise (relative to the target magnitude) do not count
    # as variance reduction; the threshold scales with the targets so that
    # rescaling them cannot change the fitted boundaries.
    tau = 1e-12 * float(c2[n].sum())
    candidates = {}
    first = _interval_best_split(times, c1, c2, 0, n)
    if first is not None:
        candidates[(0, n)] = first
    boundary_path: list[int] = []
    while len(boundary_path) + 1 < max_leaves and candidates:
        (lo, hi), (gain, b) = max(
            candidates.items(), key=lambda kv: (kv[1][0], -kv[0][0])
        )
        if gain <= tau:
            break
        del candidates[(lo, hi)]
        boundary_path.append(b)
        for child in ((lo, b), (b, hi)):
            split = _interval_best_split(times, c1, c2, *child)
            if split is not None:
                candidates[child] = split
    return boundary_path, c1


def _tree_from_boundaries(times, targets, boundaries, c1) -> TimeTree:
    bs = sorted(boundaries)
    edges = [0, *bs, times.shape[0]]
    means = np.stack([
        (c1[hi] - c1[lo]) / (hi - lo) for lo, hi in zip(edges[:-1], edges[1:])
    ])
    thresholds = np.array([(times[b - 1] + times[b]) / 2.0 for b in bs])
    return TimeTree(thresholds=thresholds, leaf_means=means, snap_times=times.copy())


def fit_time_tree(times: np.ndarray, targets: np.ndarray, max_leaves: int) -> TimeTree:
    """Greedy best-first variance-reduction tree on the time axis.

    Repeatedly splits the leaf whose best boundary yields the largest total
    (across target dimensions) variance reduction, until `max_leaves` leaves
    or no split helps. Thresholds sit at midpoints between consecutive
    distinct time values.
    """
    times = np.asarray(times, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.ndim == 2 and targets.shape[0] == 1 and times.size > 1:
        targets = targets.T
    n = times.shape[0]
    if targets.shape[0] != n:
        raise ValueError("times and targets must have matching lengths")
    if not 1 <= max_leaves <= n:
        raise ValueError(f"max_leaves must lie in [1, {n}], got {max_leaves}")
    if n > 1 and np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted ascending")
    boundaries, c1 = _grow_path(times, targets, max_leaves)
    return _tree_from_boundaries(times, targets, boundaries, c1)


def extract_change_points(tree: TimeTree) -> np.ndarray:
    """Thresholds snapped to the first arrival index at or after them."""
    if tree.thresholds.size == 0:
        return np.array([], dtype=np.int64)
    pos = np.searchsorted(tree.snap_times, tree.thresholds, side="left")
    return tree.snap_times[pos].astype(np.int64)


def _r2_mean(y_true: np.ndarray, y_pred: np.ndarray, baseline: np.ndarray) -> float:
    num = ((y_true - y_pred) ** 2).sum(axis=0)
    den = ((y_true - baseline) ** 2).sum(axis=0)
    out = np.zeros(num.shape[0])
    ok = den > 1e-30
    out[ok] = 1.0 - num[ok] / den[ok]
    return float(out.mean())


def cv_select_leaves(times: np.ndarray, targets: np.ndarray, k_max: int,
                     n_itr: int = 20, split_ratio: float = 0.7,
                     seed: int = 0) -> tuple[int, np.ndarray]:
    """Choose the leaf count by repeated random train/test splits.

    For each candidate k in 1..k_max the tree is fit on the train part and
    scored on the test part with R^2 against the train-mean baseline,
    averaged over target dimensions and iterations. Ties break toward the
    smaller k, so k=1 ("no drift") wins unless extra leaves actually help.
    """
    times = np.asarray(times, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[0] == 1 and times.size > 1:
        targets = targets.T
    n = times.shape[0]
    if n < 2:
        raise ValueError("cross-validation needs at least 2 samples")
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if not 0 < split_ratio < 1:
        raise ValueError(f"split_ratio must lie in (0, 1), got {split_ratio}")
    n_train = int(round(split_ratio * n))
    n_train = min(max(n_train, 1), n - 1)
    if n - n_train < k_max:
        raise ValueError(
            f"test split of {n - n_train} samples cannot score k_max={k_max} leaves"
        )

    scores = np.zeros((n_itr, k_max))
    for it in range(n_itr):
        rng = np.random.default_rng((int(seed), it))
        perm = rng.permutation(n)
        train = np.sort(perm[:n_train])
        test = np.sort(perm[n_train:])
        t_train, y_train = times[train], targets[train]
        t_test, y_test = times[test], targets[test]
        baseline = y_train.mean(axis=0)
        boundaries, c1 = _grow_path(t_train, y_train, k_max)
        for k in range(1, k_max + 1):
            tree = _tree_from_boundaries(t_train, y_train, boundaries[: k - 1], c1)
            scores[it, k - 1] = _r2_mean(y_test, tree.predict(t_test), baseline)
    mean_scores = scores.mean(axis=0)
    best_k = 1
    for k in range(2, k_max + 1):
        if mean_scores[k - 1] > mean_scores[best_k - 1]:
            best_k = k
    return best_k, mean_scores


def segment_eigenbasis(times: np.ndarray, vectors: np.ndarray, k_max: int,
                       n_itr: int = 20, split_ratio: float = 0.7,
                       seed: int = 0) -> Segmentation:
    """CV-select the leaf count, then refit and extract change points."""
    k, scores = cv_select_leaves(times, vectors, k_max, n_itr, split_ratio, seed)
    if k == 1:
        return Segmentation(change_points=(), k=1, cv_scores=tuple(scores))
    tree = fit_time_tree(times, vectors, k)
    cps = tuple(int(c) for c in extract_change_points(tree))
    return Segmentation(change_points=cps, k=k, cv_scores=tuple(scores))
