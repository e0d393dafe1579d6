"""Beta-score evaluation and the multi-run benchmark harness.

Detections are matched one-to-one to true change points by global nearest
pairs; a matched detection within the maximal delay is a true positive and
every other detection is a false positive. The score is tp / (p + beta*fp)
with p the number of true drifts. The harness composes seeded benchmark
streams, runs each method on identical streams, and aggregates scores,
alarm counts, and localization distances per table cell.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import baselines, detector
from .kernels import MomentForestKernel, RbfKernel
from .streams import StreamSpec, compose_stream, make_concepts, normalize_stream

DEFAULT_AB_MAX_DELAY = 25

MethodFn = Callable[..., list[int]]
ConceptFactory = Callable[[str, int], tuple]


@dataclass(frozen=True)
class EvaluationConfig:
    """Scoring protocol: beta weight, delay rule, run count, seeding."""

    beta: float = 0.5
    max_delay: int | None = None
    n_runs: int = 150
    master_seed: int = 0
    alignment_shifts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.max_delay is not None and self.max_delay <= 0:
            raise ValueError(f"max_delay must be positive, got {self.max_delay}")
        if self.n_runs < 1:
            raise ValueError(f"n_runs must be >= 1, got {self.n_runs}")


def resolve_max_delay(config: EvaluationConfig, pattern: str, b_length: int) -> int:
    """Explicit max_delay, else half of |B| (AB uses the fixed default 25)."""
    if config.max_delay is not None:
        return config.max_delay
    if pattern == "AB":
        return DEFAULT_AB_MAX_DELAY
    return max(1, b_length // 2)


@dataclass(frozen=True)
class BetaScore:
    score: float
    tp: int
    fp: int
    delays: tuple[int, ...]


def match_events(detected: Sequence[int], truth: Sequence[int]) -> list[tuple[int, int, int]]:
    """Greedy one-to-one nearest matching: (truth_idx, det_idx, |distance|).

    Pairs are taken in order of increasing distance (ties resolved by truth
    then detection index), each truth and each detection used at most once.
    """
    pairs = sorted(
        (abs(d - t), ti, di)
        for ti, t in enumerate(truth)
        for di, d in enumerate(detected)
    )
    used_t: set[int] = set()
    used_d: set[int] = set()
    matches = []
    for dist, ti, di in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        matches.append((ti, di, dist))
    return matches


def beta_score(detected: Sequence[int], truth: Sequence[int],
               max_delay: int, beta: float = 0.5) -> BetaScore:
    """Score detections against ground truth with maximal-delay matching.

    No drift and no alarm scores 1 by convention. Delays are signed
    (detection minus truth) for matched true positives.
    """
    if max_delay <= 0:
        raise ValueError(f"max_delay must be positive, got {max_delay}")
    detected = sorted(int(d) for d in detected)
    truth = sorted(int(t) for t in truth)
    if not truth and not detected:
        return BetaScore(score=1.0, tp=0, fp=0, delays=())
    matches = match_events(detected, truth)
    hits = [(ti, di) for ti, di, dist in matches if dist <= max_delay]
    tp = len(hits)
    fp = len(detected) - tp
    delays = tuple(detected[di] - truth[ti] for ti, di in hits)
    denom = len(truth) + beta * fp
    score = tp / denom if denom > 0 else (1.0 if tp == fp == 0 else 0.0)
    return BetaScore(score=score, tp=tp, fp=fp, delays=delays)


def apply_alignment_shift(detections: Sequence[int], shift: int) -> list[int]:
    """Translate every detection time by a fixed integer shift."""
    return [int(d) + int(shift) for d in detections]


def fit_alignment_shift(detection_runs: Sequence[Sequence[int]],
                        truth_runs: Sequence[Sequence[int]],
                        max_delay: int, beta: float = 0.5,
                        search_range: tuple[int, int] = (-100, 100)) -> int:
    """Shift maximizing the mean beta-score over held-out runs.

    Ties prefer the smallest magnitude, then the smaller shift.
    """
    lo, hi = search_range
    best = (-np.inf, 0)
    for shift in range(lo, hi + 1):
        mean = float(np.mean([
            beta_score(apply_alignment_shift(d, shift), t, max_delay, beta).score
            for d, t in zip(detection_runs, truth_runs)
        ]))
        key = (mean, -abs(shift), -shift)
        if key > (best[0], -abs(best[1]), -best[1]):
            best = (mean, shift)
    return best[1]


def closest_distances(detected: Sequence[int], truth: Sequence[int]) -> list[int]:
    """For each true event, the distance to the nearest detection (if any)."""
    if not detected:
        return []
    det = np.asarray(sorted(detected))
    return [int(np.min(np.abs(det - t))) for t in truth]


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one method on one seeded stream."""

    run: int
    seed: int
    score: float
    tp: int
    fp: int
    p: int
    n_alarms: int
    delays: tuple[int, ...]
    closest: tuple[int, ...]
    failed: bool = False
    error: str = ""


@dataclass(frozen=True)
class BenchmarkRow:
    """Aggregate of one (dataset, method, pattern, b_length) cell."""

    dataset: str
    method: str
    pattern: str
    b_length: int
    max_delay: int
    n_runs: int
    mean_score: float
    std_score: float
    median_alarms: float
    median_closest: float | None
    failures: int


def _name_salt(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def _run_sddm(config: detector.SddmConfig, stream, seed: int) -> list[int]:
    report = detector.sddm_stream(stream, dataclasses.replace(config, seed=int(seed)))
    return [e.time for e in report.events]


def _run_baseline(fn_name: str, config: baselines.BaselineConfig, stream, seed: int) -> list[int]:
    fn = {"mmdddm": baselines.mmdddm_detect, "kswin": baselines.kswin_detect}[fn_name]
    return fn(stream, dataclasses.replace(config, seed=int(seed)))


@dataclass(frozen=True)
class _SddmMethod:
    config: detector.SddmConfig

    def __call__(self, stream, seed: int) -> list[int]:
        return _run_sddm(self.config, stream, seed)


@dataclass(frozen=True)
class _BaselineMethod:
    fn_name: str
    config: baselines.BaselineConfig

    def __call__(self, stream, seed: int) -> list[int]:
        return _run_baseline(self.fn_name, self.config, stream, seed)


def standard_methods(sddm_config: detector.SddmConfig | None = None,
                     baseline_config: baselines.BaselineConfig | None = None
                     ) -> dict[str, MethodFn]:
    """The four named detectors: sddm-mt, sddm-rbf, mmdddm, kswin."""
    sddm_mt = sddm_config or detector.SddmConfig()
    sddm_rbf = dataclasses.replace(sddm_mt, kernel=RbfKernel())
    if not isinstance(sddm_mt.kernel, MomentForestKernel):
        sddm_mt = dataclasses.replace(sddm_mt, kernel=MomentForestKernel())
    base = baseline_config or baselines.BaselineConfig()
    return {
        "sddm-mt": _SddmMethod(sddm_mt),
        "sddm-rbf": _SddmMethod(sddm_rbf),
        "mmdddm": _BaselineMethod("mmdddm", base),
        "kswin": _BaselineMethod("kswin", base),
    }


@dataclass(frozen=True)
class _RunTask:
    dataset: str
    method_name: str
    method: MethodFn
    factory: ConceptFactory
    pattern: str
    b_length: int
    run: int
    max_delay: int
    beta: float
    shift: int
    master_seed: int


def _execute_run(task: _RunTask) -> RunRecord:
    stream_seed = int(np.random.SeedSequence(
        (task.master_seed, _name_salt(task.dataset), _name_salt(task.pattern),
         task.b_length, task.run)
    ).generate_state(1)[0])
    rng = np.random.default_rng((stream_seed, 0xD17A))
    delta = int(rng.integers(0, 101))
    concepts = task.factory(task.pattern, stream_seed)
    spec = StreamSpec(pattern=task.pattern, concepts=concepts,
                      b_length=task.b_length, delta=delta, seed=stream_seed)
    stream, truth = compose_stream(spec)
    stream = normalize_stream(stream)
    method_seed = int(np.random.SeedSequence(
        (stream_seed, _name_salt(task.method_name))
    ).generate_state(1)[0])
    try:
        detections = task.method(stream, method_seed)
    except Exception as exc:  # a method failure scores 0 but the run goes on
        return RunRecord(run=task.run, seed=stream_seed, score=0.0, tp=0, fp=0,
                         p=len(truth.change_points), n_alarms=0, delays=(),
                         closest=(), failed=True, error=f"{type(exc).__name__}: {exc}")
    detections = apply_alignment_shift(detections, task.shift)
    result = beta_score(detections, truth.change_points, task.max_delay, task.beta)
    return RunRecord(
        run=task.run, seed=stream_seed, score=result.score, tp=result.tp,
        fp=result.fp, p=len(truth.change_points), n_alarms=len(detections),
        delays=result.delays,
        closest=tuple(closest_distances(detections, truth.change_points)),
    )


def synthetic_dataset(name: str) -> ConceptFactory:
    """Concept factory for one named synthetic benchmark generator."""

    def factory(pattern: str, seed: int):
        return make_concepts(name, pattern, seed=seed)

    factory.__name__ = f"{name}_concepts"
    return factory


def run_benchmark(datasets: Mapping[str, ConceptFactory],
                  methods: Mapping[str, MethodFn],
                  patterns: Sequence[str] = ("AB",),
                  b_lengths: Sequence[int] = (50,),
                  n_runs: int | None = None,
                  config: EvaluationConfig = EvaluationConfig(),
                  jobs: int = 1,
                  progress: Callable[[str], None] | None = None,
                  ) -> tuple[list[BenchmarkRow], dict[tuple, list[RunRecord]]]:
    """Score every method on every (dataset, pattern, b_length) cell.

    All methods of one cell and run index see the identical stream; the AB
    pattern ignores b_lengths (one column, reported with b_length 0). Returns
    aggregate rows plus the per-run records keyed by cell.
    """
    runs = config.n_runs if n_runs is None else n_runs
    rows: list[BenchmarkRow] = []
    records: dict[tuple, list[RunRecord]] = {}
    for ds_name, factory in datasets.items():
        for pattern in patterns:
            blens = [0] if pattern == "AB" else list(b_lengths)
            for b in blens:
                b_eff = 50 if pattern == "AB" else b
                for m_name, method in methods.items():
                    max_delay = resolve_max_delay(config, pattern, b_eff)
                    shift = int(config.alignment_shifts.get(m_name, 0))
                    tasks = [
                        _RunTask(dataset=ds_name, method_name=m_name, method=method,
                                 factory=factory, pattern=pattern, b_length=b_eff,
                                 run=r, max_delay=max_delay, beta=config.beta,
                                 shift=shift, master_seed=config.master_seed)
                        for r in range(runs)
                    ]
                    if jobs > 1:
                        with ProcessPoolExecutor(max_workers=jobs) as pool:
                            cell = list(pool.map(_execute_run, tasks))
                    else:
                        cell = [_execute_run(t) for t in tasks]
                    key = (ds_name, m_name, pattern, b)
                    records[key] = cell
                    rows.append(_aggregate(ds_name, m_name, pattern, b, max_delay, cell))
                    if progress is not None:
                        row = rows[-1]
                        progress(f"{ds_name}/{m_name}/{pattern}/{b}: "
                                 f"beta={row.mean_score:.3f}+-{row.std_score:.3f}")
    return rows, records


def _aggregate(dataset, method, pattern, b_length, max_delay,
               cell: list[RunRecord]) -> BenchmarkRow:
    scores = np.array([r.score for r in cell])
    alarms = np.array([r.n_alarms for r in cell])
    closest = [c for r in cell for c in r.closest]
    return BenchmarkRow(
        dataset=dataset, method=method, pattern=pattern, b_length=b_length,
        max_delay=max_delay, n_runs=len(cell),
        mean_score=float(scores.mean()),
        std_score=float(scores.std()),
        median_alarms=float(np.median(alarms)),
        median_closest=float(np.median(closest)) if closest else None,
        failures=sum(r.failed for r in cell),
    )


_CSV_FIELDS = ("dataset", "method", "pattern", "b_length", "max_delay", "n_runs",
               "mean_score", "std_score", "median_alarms", "median_closest", "failures")


def write_benchmark_csv(rows: Sequence[BenchmarkRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for r in rows:
            writer.writerow([
                r.dataset, r.method, r.pattern, r.b_length, r.max_delay, r.n_runs,
                repr(r.mean_score), repr(r.std_score), repr(r.median_alarms),
                "" if r.median_closest is None else repr(r.median_closest),
                r.failures,
            ])


def write_benchmark_json(rows: Sequence[BenchmarkRow], path) -> None:
    payload = [dataclasses.asdict(r) for r in rows]
    with Path(path).open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_benchmark_markdown(rows: Sequence[BenchmarkRow], path) -> None:
    """Pivot to one row per (dataset, method) and one column per cell."""
    columns = sorted({(r.pattern, r.b_length) for r in rows})
    col_names = [p if p == "AB" else f"{p} {b}" for p, b in columns]
    lookup = {(r.dataset, r.method, r.pattern, r.b_length): r for r in rows}
    pairs = sorted({(r.dataset, r.method) for r in rows})
    lines = ["| dataset | method | " + " | ".join(col_names) + " |",
             "|" + "---|" * (2 + len(columns))]
    for ds, m in pairs:
        cells = []
        for p, b in columns:
            r = lookup.get((ds, m, p, b))
            cells.append(f"{r.mean_score:.2f} +- {r.std_score:.2f}" if r else "")
        lines.append(f"| {ds} | {m} | " + " | ".join(cells) + " |")
    Path(path).write_text("\n".join(lines) + "\n")


def score_ttest(cell_a: Sequence[RunRecord], cell_b: Sequence[RunRecord]) -> float:
    """Welch t-test p-value between the per-run scores of two cells."""
    import scipy.stats

    a = [r.score for r in cell_a]
    b = [r.score for r in cell_b]
    return float(scipy.stats.ttest_ind(a, b, equal_var=False).pvalue)
