"""The spectral drift detection pipeline (SDDM).

Offline core: kernel matrix of the window, symmetric normalized Laplacian,
eigenvectors with the smallest eigenvalues, cross-validated leaf count for a
time-axis tree, leaf boundaries as change points. Streaming mode slides a
bounded window along the stream and reruns the core every `batch_stride`
arrivals; raw per-batch detections are consolidated by Ward clustering on
the time axis and filtered by cross-batch consensus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.cluster.hierarchy

from .kernels import KernelConfig, MomentForestKernel, batch_kernel_config, compute_kernel_matrix
from .segmentation import cv_select_leaves, extract_change_points, fit_time_tree
from .spectral import laplacian, smallest_eigenvectors
from .streams import Stream


@dataclass(frozen=True)
class SddmConfig:
    """Tuning knobs of the spectral drift detector."""

    kernel: KernelConfig = field(default_factory=MomentForestKernel)
    n_eigen: int = 5
    n_itr: int = 20
    k_max: int = 5
    n_min: int = 100
    n_max: int = 500
    batch_stride: int = 50
    ward_threshold: float = 20.0
    consensus_fraction: float = 0.5
    cv_split_ratio: float = 0.7
    laplacian_kind: str = "symmetric"
    seed: int = 0

    def __post_init__(self):
        if self.n_min > self.n_max:
            raise ValueError(f"n_min={self.n_min} exceeds n_max={self.n_max}")
        if self.k_max > self.n_eigen + 1:
            raise ValueError(
                f"k_max={self.k_max} must not exceed n_eigen + 1 = {self.n_eigen + 1}"
            )
        if self.batch_stride < 1:
            raise ValueError(f"batch_stride must be >= 1, got {self.batch_stride}")
        if not 0 < self.consensus_fraction <= 1:
            raise ValueError(
                f"consensus_fraction must lie in (0, 1], got {self.consensus_fraction}"
            )


@dataclass(frozen=True)
class DriftEvent:
    """One detected change point with its cross-batch support."""

    time: int
    batch_id: int
    support: int = 1


@dataclass(frozen=True)
class BatchWindow:
    """Index range one batch analyzed: [t_lo, t_hi], inclusive arrival times."""

    batch_id: int
    t_lo: int
    t_hi: int


@dataclass
class DriftReport:
    """Final events plus the raw per-batch detections they came from."""

    events: list[DriftEvent]
    raw_events: list[DriftEvent]
    cv_scores: list[float]
    batch_windows: list[BatchWindow] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "events": [{"t": e.time, "support": e.support} for e in self.events],
            "raw": [{"t": e.time, "batch": e.batch_id} for e in self.raw_events],
            "cv_scores": [float(s) for s in self.cv_scores],
        }


def _derived_seed(seed: int, *salt: int) -> int:
    return int(np.random.SeedSequence((int(seed), *map(int, salt))).generate_state(1)[0])


def sddm_offline(window: Stream, config: SddmConfig,
                 batch_id: int = 0) -> tuple[list[int], np.ndarray]:
    """Detect every change point inside one window.

    Returns the detected arrival indices (empty when cross-validation picks
    one leaf) and the per-leaf-count CV score curve.
    """
    n = len(window)
    if n < config.n_min:
        raise ValueError(f"window of {n} samples is below n_min={config.n_min}")
    kcfg = batch_kernel_config(config.kernel, _derived_seed(config.seed, batch_id, 0))
    k = compute_kernel_matrix(window.x, window.times, kcfg)
    lap = laplacian(k, kind=config.laplacian_kind)
    basis = smallest_eigenvectors(lap, config.n_eigen, window.times)
    times = window.times.astype(float)
    k_sel, scores = cv_select_leaves(
        times, basis.vectors, config.k_max, config.n_itr,
        config.cv_split_ratio, seed=_derived_seed(config.seed, batch_id, 1),
    )
    if k_sel == 1:
        return [], scores
    tree = fit_time_tree(times, basis.vectors, k_sel)
    return [int(c) for c in extract_change_points(tree)], scores


def sddm_stream(stream: Stream, config: SddmConfig) -> DriftReport:
    """Run the detector over a stream with a sliding, bounded window.

    The offline core executes every `batch_stride` arrivals once more than
    `n_min` samples are buffered; the window keeps at most `n_max` samples.
    """
    raw: list[DriftEvent] = []
    windows: list[BatchWindow] = []
    cv_scores: np.ndarray | list = []
    batch_id = 0
    n = len(stream)
    for i in range(n):
        arrivals = i + 1
        if arrivals % config.batch_stride != 0:
            continue
        lo = max(0, arrivals - config.n_max)
        if arrivals - lo <= config.n_min:
            continue
        window = stream.slice(lo, arrivals)
        events, cv_scores = sddm_offline(window, config, batch_id=batch_id)
        windows.append(BatchWindow(batch_id=batch_id,
                                   t_lo=int(window.times[0]),
                                   t_hi=int(window.times[-1])))
        raw.extend(DriftEvent(time=t, batch_id=batch_id) for t in events)
        batch_id += 1
    consolidated = dedup_ward(raw, config.ward_threshold)
    final = consensus_filter(consolidated, windows, config.consensus_fraction)
    return DriftReport(events=final, raw_events=raw,
                       cv_scores=list(cv_scores), batch_windows=windows)


def _cluster_representative(events: Sequence[DriftEvent]) -> DriftEvent:
    times = np.array([e.time for e in events])
    values, counts = np.unique(times, return_counts=True)
    # Most frequent time; ties fall to the earliest since values are sorted.
    rep = int(values[np.argmax(counts)])
    support = len({e.batch_id for e in events})
    first_batch = min(e.batch_id for e in events)
    return DriftEvent(time=rep, batch_id=first_batch, support=support)


def dedup_ward(raw_events: Sequence[DriftEvent], ward_threshold: float) -> list[DriftEvent]:
    """Collapse repeated detections of one drift into single events.

    Ward agglomerative clustering on the 1-d event times, cut at the given
    distance; each cluster reports its most frequent time. A final sweep
    merges any representatives still within the threshold of each other, so
    consolidated events are pairwise separated by more than `ward_threshold`.
    """
    events = list(raw_events)
    if not events:
        return []
    if len(events) == 1:
        e = events[0]
        return [DriftEvent(time=e.time, batch_id=e.batch_id, support=1)]
    times = np.array([[float(e.time)] for e in events])
    linkage = scipy.cluster.hierarchy.linkage(times, method="ward")
    labels = scipy.cluster.hierarchy.fcluster(linkage, t=ward_threshold, criterion="distance")
    clusters: dict[int, list[DriftEvent]] = {}
    for e, lab in zip(events, labels):
        clusters.setdefault(int(lab), []).append(e)
    groups = sorted(clusters.values(), key=lambda g: min(e.time for e in g))
    merged = True
    while merged and len(groups) > 1:
        merged = False
        reps = [_cluster_representative(g) for g in groups]
        for j in range(len(groups) - 1):
            if abs(reps[j + 1].time - reps[j].time) <= ward_threshold:
                groups[j] = groups[j] + groups.pop(j + 1)
                merged = True
                break
    return sorted((_cluster_representative(g) for g in groups), key=lambda e: e.time)


def consensus_filter(events: Sequence[DriftEvent], batch_windows: Sequence[BatchWindow],
                     consensus_fraction: float) -> list[DriftEvent]:
    """Keep events confirmed by enough of the batches that could see them.

    An event survives iff support / (number of batch windows containing its
    time) >= consensus_fraction.
    """
    kept = []
    for e in events:
        covering = sum(1 for w in batch_windows if w.t_lo <= e.time <= w.t_hi)
        if covering == 0:
            continue
        if e.support / covering >= consensus_fraction - 1e-12:
            kept.append(e)
    return kept
