"""Two-window comparison baselines: MMD permutation testing and KS windowing.

Both detectors slide a pair of adjacent length-l windows along the stream
and test the newest window against the one before it: MMDDDM with a
permutation-calibrated squared-MMD statistic, KS-Win with a feature-wise
Kolmogorov-Smirnov test at an asymptotic p-value. After an alert both stay
silent for a refractory span so one drift does not pile up alerts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kstwobign

from .kernels import KernelConfig, RbfKernel, stream_kernel_function
from .streams import Stream


@dataclass(frozen=True)
class BaselineConfig:
    """Shared knobs for the windowed baseline detectors.

    `refractory_span=None` uses 2 * window_length; 0 disables the refractory
    state (useful for calibration runs). MMDDDM refreshes its permutation
    null every `recalibrate_every` positions instead of at every test point;
    the cached null is still compared against the current statistic.
    """

    window_length: int = 100
    alpha: float = 0.01
    n_permutations: int = 200
    bonferroni: bool = True
    kernel: KernelConfig = field(default_factory=RbfKernel)
    stride: int = 1
    refractory_span: int | None = None
    recalibrate_every: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.window_length < 10:
            raise ValueError(f"window_length must be >= 10, got {self.window_length}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.n_permutations < 1:
            raise ValueError(f"n_permutations must be >= 1, got {self.n_permutations}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.recalibrate_every < 1:
            raise ValueError(f"recalibrate_every must be >= 1, got {self.recalibrate_every}")

    @property
    def effective_refractory(self) -> int:
        return 2 * self.window_length if self.refractory_span is None else self.refractory_span


def ks_statistic(sample_a: np.ndarray, sample_b: np.ndarray) -> float:
    """Sup-norm distance between the empirical CDFs of two 1-d samples."""
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_pvalue(statistic: float, n: int, m: int) -> float:
    """Asymptotic two-sample KS p-value."""
    en = np.sqrt(n * m / (n + m))
    return float(np.clip(kstwobign.sf(en * statistic), 0.0, 1.0))


def kswin_detect(stream: Stream, config: BaselineConfig) -> list[int]:
    """Feature-wise KS testing of adjacent windows along the stream.

    At each stride position, every feature's KS statistic between
    [pos-2l, pos-l) and [pos-l, pos) gets an asymptotic p-value; the
    detector alerts when any feature's p-value falls below alpha (divided by
    the feature count when Bonferroni correction is on).
    """
    l = config.window_length
    n = len(stream)
    if n < 2 * l:
        return []
    d = stream.dim
    alpha_eff = config.alpha / d if config.bonferroni else config.alpha
    events: list[int] = []
    next_allowed = 0
    for pos in range(2 * l, n + 1, config.stride):
        if pos < next_allowed:
            continue
        ref = stream.x[pos - 2 * l: pos - l]
        cur = stream.x[pos - l: pos]
        p_min = min(ks_pvalue(ks_statistic(ref[:, f], cur[:, f]), l, l) for f in range(d))
        if p_min < alpha_eff:
            events.append(int(stream.times[pos - 1]))
            next_allowed = pos + config.effective_refractory
    return events


def _window_mmd2(prefix: np.ndarray, pos: int, l: int) -> float:
    def block(a0, a1, b0, b1):
        return prefix[a1, b1] - prefix[a0, b1] - prefix[a1, b0] + prefix[a0, b0]

    aa = block(pos - 2 * l, pos - l, pos - 2 * l, pos - l)
    ab = block(pos - 2 * l, pos - l, pos - l, pos)
    bb = block(pos - l, pos, pos - l, pos)
    return max((aa - 2 * ab + bb) / (l * l), 0.0)


def _permutation_null(k: np.ndarray, pos: int, l: int, n_perm: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Squared-MMD values under random relabelings of the 2l-window."""
    idx = np.arange(pos - 2 * l, pos)
    kw = k[np.ix_(idx, idx)]
    z = np.zeros((2 * l, n_perm))
    for p in range(n_perm):
        z[rng.permutation(2 * l)[:l], p] = 1.0
    u = kw @ z
    sum_bb = (z * u).sum(axis=0)
    sum_1b = u.sum(axis=0)
    total = kw.sum()
    sum_aa = total - 2 * sum_1b + sum_bb
    sum_ab = sum_1b - sum_bb
    return np.sort((sum_aa - 2 * sum_ab + sum_bb) / (l * l))


def mmdddm_detect(stream: Stream, config: BaselineConfig) -> list[int]:
    """Sliding two-window MMD test with a permutation-calibrated threshold.

    The alert rule is the standard permutation p-value with the identity
    permutation included: p = (1 + #{null >= observed}) / (1 + n_perm),
    alert iff p <= alpha; this equals comparing the statistic against the
    (1 - alpha) quantile of the null. With alpha = 1 every position alerts.
    """
    l = config.window_length
    n = len(stream)
    if n < 2 * l:
        return []
    kernel = stream_kernel_function(stream.x, stream.times, config.kernel)
    k = kernel(stream.x, stream.x)
    prefix = np.zeros((n + 1, n + 1))
    np.cumsum(np.cumsum(k, axis=0), axis=1, out=prefix[1:, 1:])

    rng = np.random.default_rng(config.seed)
    events: list[int] = []
    next_allowed = 0
    null: np.ndarray | None = None
    last_calibration = -np.inf
    for pos in range(2 * l, n + 1, config.stride):
        if pos < next_allowed:
            continue
        if null is None or pos - last_calibration >= config.recalibrate_every:
            null = _permutation_null(k, pos, l, config.n_permutations, rng)
            last_calibration = pos
        observed = _window_mmd2(prefix, pos, l)
        n_ge = null.size - np.searchsorted(null, observed, side="left")
        p_value = (1 + n_ge) / (1 + null.size)
        if p_value <= config.alpha:
            events.append(int(stream.times[pos - 1]))
            next_allowed = pos + config.effective_refractory
    return events
