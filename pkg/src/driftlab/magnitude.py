"""Drift magnitude profiles and their predicted shape under abrupt drift.

The drift magnitude at time t is the kernel distance between the sample
distributions of the two trailing windows [t-2l, t-l) and [t-l, t). For
abrupt drift the sqrt-magnitude profile is, up to sampling noise, a sum of
triangular bumps: one per change point, rising from the change point to a
peak one window length later, with height equal to the kernel distance of
the adjacent concepts. This module computes both sides of that statement
(empirical profile and predicted bump sum) plus the finite-sample quadratic
form identity w'Kw = sum_i lambda_i (v_i'w)^2 that underlies it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import (
    KernelConfig,
    KernelMatrix,
    empirical_mmd2,
    pool_kernel_function,
    stream_kernel_function,
)
from .streams import Stream


@dataclass(frozen=True)
class TwoSlidingWindows:
    """The +-1 two-window weighting with window length l.

    The raw weight is +1 on offsets [-l, 0) and -1 on [-2l, -l); its
    antiderivative is a triangular bump of height l supported on [-2l, 0].
    Profiles are compared in the mean-normalized convention (each window
    averaged), so `shape` rescales the bump to unit height and reflects it
    to trail the change point: peak 1 at lag +l, support [0, 2l].
    """

    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"window length must be >= 1, got {self.length}")

    def weight_vector(self) -> np.ndarray:
        """Mean-normalized weights over the last 2l offsets, oldest first."""
        l = self.length
        return np.concatenate([np.full(l, -1.0 / l), np.full(l, 1.0 / l)])

    def antiderivative(self, u) -> np.ndarray:
        """Integral of the raw +-1 weight; height l at u=-l, support [-2l, 0]."""
        u = np.asarray(u, dtype=float)
        return np.clip(self.length - np.abs(u + self.length), 0.0, None)

    def shape(self, u) -> np.ndarray:
        """Unit-height detection bump at lag u after a change point."""
        u = np.asarray(u, dtype=float)
        return np.clip(1.0 - np.abs(u - self.length) / self.length, 0.0, None)


@dataclass(frozen=True)
class CustomWeights:
    """An explicit signed weight vector over window offsets, oldest first."""

    weights: np.ndarray

    def weight_vector(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class ShapePrediction:
    """Predicted sqrt-magnitude profile for known change points."""

    change_points: np.ndarray
    amplitudes: np.ndarray
    window_length: int

    def profile(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        shape = TwoSlidingWindows(self.window_length).shape
        out = np.zeros_like(ts)
        for cp, amp in zip(self.change_points, self.amplitudes):
            out += amp * shape(ts - cp)
        return out


def _frozen_kernel(stream: Stream, config: KernelConfig):
    """Pin the kernel on the whole stream so every evaluation is consistent."""
    return stream_kernel_function(stream.x, stream.times, config)


def drift_magnitude(stream: Stream, l: int, config: KernelConfig, t: int) -> float:
    """Kernel distance between the trailing windows [t-2l, t-l) and [t-l, t)."""
    if t < 2 * l:
        raise ValueError(f"t={t} leaves no room for two windows of length {l}")
    if t > len(stream):
        raise ValueError(f"t={t} is past the end of the stream ({len(stream)} samples)")
    window = stream.slice(t - 2 * l, t)
    kernel = _frozen_kernel(window, config)
    k = kernel(window.x, window.x)
    return float(np.sqrt(empirical_mmd2(k, np.arange(l), np.arange(l, 2 * l))))


def _prefix_table(k: np.ndarray) -> np.ndarray:
    n = k.shape[0]
    s = np.zeros((n + 1, n + 1))
    np.cumsum(np.cumsum(k, axis=0), axis=1, out=s[1:, 1:])
    return s


def _block_mean(s: np.ndarray, a0, a1, b0, b1) -> np.ndarray:
    total = s[a1, b1] - s[a0, b1] - s[a1, b0] + s[a0, b0]
    return total / ((a1 - a0) * (b1 - b0))


def magnitude_profile(stream: Stream, l: int, config: KernelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Squared magnitude at every valid position t in [2l, n].

    One kernel evaluation over the whole stream plus prefix sums make the
    sweep O(1) per position. Returns (positions, mmd2 values); take sqrt for
    the magnitude itself.
    """
    n = len(stream)
    if n < 2 * l:
        raise ValueError(f"stream of {n} samples is shorter than 2l={2 * l}")
    kernel = _frozen_kernel(stream, config)
    k = kernel(stream.x, stream.x)
    s = _prefix_table(k)
    ts = np.arange(2 * l, n + 1)
    aa = _block_mean(s, ts - 2 * l, ts - l, ts - 2 * l, ts - l)
    ab = _block_mean(s, ts - 2 * l, ts - l, ts - l, ts)
    bb = _block_mean(s, ts - l, ts, ts - l, ts)
    return ts, np.clip(aa - 2 * ab + bb, 0.0, None)


def permutation_noise_floor(k: np.ndarray, section: np.ndarray, l: int,
                            n_permutations: int = 200, seed: int = 0) -> float:
    """Mean squared-MMD between random disjoint l-subsets of one concept.

    Estimates the additive small-sample bias of the windowed statistic under
    stationarity; subtract it from squared profiles before comparing shapes.
    """
    section = np.asarray(section, dtype=np.int64)
    if section.size < 2 * l:
        raise ValueError(f"need a stationary section of at least {2 * l} samples")
    rng = np.random.default_rng(seed)
    vals = np.empty(n_permutations)
    for p in range(n_permutations):
        pick = rng.permutation(section)[: 2 * l]
        vals[p] = empirical_mmd2(k, pick[:l], pick[l:])
    return float(vals.mean())


def predict_shape(change_points: Sequence[int], pools: Sequence[np.ndarray],
                  config: KernelConfig, l: int) -> ShapePrediction:
    """Amplitudes and bump profile predicted from per-concept sample pools.

    Requires change points separated by more than 2l, so that no two bumps
    overlap and the profile of each is an isolated triangle.
    """
    cps = np.asarray(sorted(int(c) for c in change_points), dtype=np.int64)
    pools = [np.atleast_2d(np.asarray(p, dtype=float)) for p in pools]
    if len(pools) != cps.size + 1:
        raise ValueError(f"{cps.size} change points need {cps.size + 1} pools, got {len(pools)}")
    if cps.size >= 2 and np.min(np.diff(cps)) <= 2 * l:
        raise ValueError(
            f"change points must be separated by more than 2l={2 * l} for the "
            "single-bump shape to apply"
        )
    if cps.size == 0:
        return ShapePrediction(change_points=cps, amplitudes=np.array([]), window_length=l)
    kernel = pool_kernel_function(pools, config)
    amps = np.empty(cps.size)
    for j in range(cps.size):
        a, b = pools[j], pools[j + 1]
        mmd2 = kernel(a, a).mean() - 2 * kernel(a, b).mean() + kernel(b, b).mean()
        amps[j] = np.sqrt(max(mmd2, 0.0))
    return ShapePrediction(change_points=cps, amplitudes=amps, window_length=l)


@dataclass(frozen=True)
class ShapeCheck:
    """Empirical vs predicted sqrt-magnitude profile of one stream."""

    positions: np.ndarray
    empirical: np.ndarray
    predicted: np.ndarray
    noise_floor: float
    amplitudes: np.ndarray
    sup_deviation: float
    relative_deviation: float
    peak_position: int
    predicted_peak_position: int


def verify_shape(stream: Stream, change_points: Sequence[int],
                 config: KernelConfig, l: int,
                 n_permutations: int = 200, seed: int = 0) -> ShapeCheck:
    """Compare the measured sqrt-magnitude profile against the bump sum.

    The kernel is pinned once on the whole stream; pool amplitudes, the
    profile, and the permutation noise floor all use the same evaluations.
    The noise floor is subtracted in the squared domain before taking roots.
    Returns the sup deviation over all valid positions, also relative to the
    largest amplitude.
    """
    n = len(stream)
    cps = sorted(int(c) for c in change_points)
    if any(not 0 < c < n for c in cps):
        raise ValueError(f"change points {cps} must lie strictly inside (0, {n})")
    if len(cps) >= 2 and (np.diff(cps) <= 2 * l).any():
        raise ValueError(
            f"change points must be separated by more than 2l={2 * l}"
        )
    kernel = _frozen_kernel(stream, config)
    k = kernel(stream.x, stream.x)
    s = _prefix_table(k)
    ts = np.arange(2 * l, n + 1)
    aa = _block_mean(s, ts - 2 * l, ts - l, ts - 2 * l, ts - l)
    ab = _block_mean(s, ts - 2 * l, ts - l, ts - l, ts)
    bb = _block_mean(s, ts - l, ts, ts - l, ts)
    mmd2_profile = np.clip(aa - 2 * ab + bb, 0.0, None)

    bounds = [0, *cps, n]
    pool_idx = [np.arange(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    widest = max(pool_idx, key=len)
    if widest.size < 2 * l:
        raise ValueError("no concept section is long enough to estimate the noise floor")
    floor = permutation_noise_floor(k, widest, l, n_permutations, seed)

    amps = np.empty(len(cps))
    for j in range(len(cps)):
        amps[j] = np.sqrt(empirical_mmd2(k, pool_idx[j], pool_idx[j + 1]))
    prediction = ShapePrediction(change_points=np.asarray(cps, dtype=np.int64),
                                 amplitudes=amps, window_length=l)
    predicted = prediction.profile(ts)
    empirical = np.sqrt(np.clip(mmd2_profile - floor, 0.0, None))

    sup_dev = float(np.max(np.abs(empirical - predicted)))
    peak_amp = float(amps.max()) if amps.size else float("nan")
    rel = sup_dev / peak_amp if amps.size else float("nan")
    peak_pos = int(ts[np.argmax(empirical)]) if amps.size else -1
    pred_peak = int(ts[np.argmax(predicted)]) if amps.size else -1
    return ShapeCheck(
        positions=ts,
        empirical=empirical,
        predicted=predicted,
        noise_floor=floor,
        amplitudes=amps,
        sup_deviation=sup_dev,
        relative_deviation=rel,
        peak_position=peak_pos,
        predicted_peak_position=pred_peak,
    )


def check_weighted_identity(k, w) -> tuple[float, float, float]:
    """Both sides of w'Kw = sum_i lambda_i (v_i'w)^2 and their gap.

    The left side is the direct quadratic form; the right side goes through
    a full symmetric eigendecomposition, so the two computations share no
    intermediate results.
    """
    values = k.values if isinstance(k, KernelMatrix) else np.asarray(k, dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != values.shape[0]:
        raise ValueError(
            f"weight vector of length {w.shape[0]} does not match matrix size {values.shape[0]}"
        )
    lhs = float(w @ values @ w)
    eigenvalues, vectors = np.linalg.eigh(values)
    rhs = float(np.sum(eigenvalues * (vectors.T @ w) ** 2))
    return lhs, rhs, abs(lhs - rhs)
