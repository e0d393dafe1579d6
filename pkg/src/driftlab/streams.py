"""Synthetic concept generators and benchmark stream composition.

A stream is a finite sequence of (feature vector, arrival index) pairs drawn
from a piecewise-constant sequence of concepts. This module provides the
standard benchmark concepts (STAGGER, RandomRBF, rotating hyperplane, and
resampling from a fixed pool), the W/D/O composition protocol used for
benchmarking (1600-sample streams with AB / ABA / ABC drift segments and
known ground-truth change points), whole-stream normalization, CSV ingestion,
and JSON-lines stream export.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

STREAM_LENGTH = 1600
DRIFT_SEGMENT_LENGTH = 500
WARMUP_BASE = 500
COOLDOWN_BASE = 600
B_LENGTHS = (25, 50, 75, 100)
PATTERNS = ("AB", "ABA", "ABC")


class ConfigurationError(ValueError):
    """A generator, stream spec, or ingestion option is invalid."""


class IngestionError(ValueError):
    """A data file could not be parsed into a numeric stream."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class StreamSample:
    """One observation: a feature vector and its arrival index."""

    features: np.ndarray
    time: int


@dataclass(frozen=True)
class Stream:
    """A finite stream held as dense arrays.

    Attributes:
        x: (n, d) float features, one row per sample.
        times: (n,) strictly increasing integer arrival indices.
    """

    x: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        times = np.asarray(self.times, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {x.shape}")
        if times.shape != (x.shape[0],):
            raise ValueError("times must have one entry per sample")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("arrival indices must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __iter__(self) -> Iterator[StreamSample]:
        for i in range(len(self)):
            yield StreamSample(self.x[i], int(self.times[i]))

    def slice(self, lo: int, hi: int) -> "Stream":
        """Positional sub-stream over rows [lo, hi)."""
        return Stream(self.x[lo:hi], self.times[lo:hi])


@dataclass(frozen=True)
class GroundTruth:
    """True change-point arrival indices of a composed stream."""

    change_points: tuple[int, ...]
    pattern: str


class ConceptSource:
    """Base class for i.i.d. samplers of one fixed concept distribution.

    A source owns a seeded generator. `reset()` restores the initial state so
    that repeated draw sequences are bit-identical; `reseed(key)` rebinds the
    source (including any randomly drawn concept parameters) to a new seed.
    """

    def __init__(self, seed):
        self._seed = seed
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng(self._seed)
        self._init_params(np.random.default_rng((*_as_key(self._seed), 0x5EED)))

    def reseed(self, seed) -> None:
        self._seed = seed
        self.reset()

    def _init_params(self, rng: np.random.Generator) -> None:
        """Redraw any concept-defining parameters. Default: none."""

    def _sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def draw(self, n: int) -> np.ndarray:
        if n <= 0:
            raise ConfigurationError(f"sample count must be positive, got {n}")
        return self._sample(self._rng, n)


def _as_key(seed) -> tuple[int, ...]:
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def generate_concept(source: ConceptSource, n: int) -> np.ndarray:
    """Draw n i.i.d. samples from a concept; deterministic given its seed."""
    return source.draw(n)


# STAGGER attribute encoding: size, color, shape, three values each,
# one-hot embedded in 9 dims; the boolean class label is appended as a
# tenth feature so label drift shows up as distributional drift.
_STAGGER_RULES = {
    1: lambda size, color, shape: (size == 0) & (color == 0),
    2: lambda size, color, shape: (color == 1) | (shape == 1),
    3: lambda size, color, shape: (size == 1) | (size == 2),
}


class StaggerConcept(ConceptSource):
    """One of the three classic STAGGER boolean concepts.

    Rule 1: size=small and color=red. Rule 2: color=green or shape=circle.
    Rule 3: size=medium or size=large.
    """

    def __init__(self, rule: int, seed=0):
        if rule not in _STAGGER_RULES:
            raise ConfigurationError(f"STAGGER rule must be 1, 2, or 3, got {rule}")
        self.rule = rule
        super().__init__(seed)

    @property
    def dim(self) -> int:
        return 10

    def _sample(self, rng, n):
        attrs = rng.integers(0, 3, size=(n, 3))
        label = _STAGGER_RULES[self.rule](attrs[:, 0], attrs[:, 1], attrs[:, 2])
        x = np.zeros((n, 10))
        for j in range(3):
            x[np.arange(n), 3 * j + attrs[:, j]] = 1.0
        x[:, 9] = label.astype(float)
        return x


class RandomRbfConcept(ConceptSource):
    """Weighted mixture of spherical Gaussian-radius blobs (RandomRBF).

    Centroid centers, per-centroid deviations, weights, and class labels are
    drawn once from the seed; sampling picks a centroid by weight and offsets
    its center by a normally distributed radius in a uniform direction. The
    class label of the centroid is appended as an extra feature.
    """

    def __init__(self, seed=0, n_features: int = 10, n_centroids: int = 50, n_classes: int = 2):
        if n_centroids < 1 or n_features < 1 or n_classes < 1:
            raise ConfigurationError("RandomRBF needs at least one centroid, feature, and class")
        self.n_features = n_features
        self.n_centroids = n_centroids
        self.n_classes = n_classes
        super().__init__(seed)

    @property
    def dim(self) -> int:
        return self.n_features + 1

    def _init_params(self, rng):
        self._centers = rng.random((self.n_centroids, self.n_features))
        self._stds = rng.random(self.n_centroids)
        self._labels = rng.integers(0, self.n_classes, size=self.n_centroids)
        weights = rng.random(self.n_centroids)
        self._probs = weights / weights.sum()

    def _sample(self, rng, n):
        idx = rng.choice(self.n_centroids, size=n, p=self._probs)
        direction = rng.uniform(-1.0, 1.0, size=(n, self.n_features))
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        direction /= norms
        radius = rng.normal(size=(n, 1)) * self._stds[idx, None]
        x = np.empty((n, self.n_features + 1))
        x[:, : self.n_features] = self._centers[idx] + direction * radius
        x[:, self.n_features] = self._labels[idx].astype(float)
        return x


class HyperplaneConcept(ConceptSource):
    """Uniform cube samples labeled by a fixed random hyperplane.

    Features are uniform on [0, 1]^d; the label is 1 when the weighted sum
    exceeds half the total weight, and is appended as an extra feature.
    Different seeds give different hyperplanes, hence different concepts.
    """

    def __init__(self, seed=0, n_features: int = 10):
        if n_features < 1:
            raise ConfigurationError("hyperplane needs at least one feature")
        self.n_features = n_features
        super().__init__(seed)

    @property
    def dim(self) -> int:
        return self.n_features + 1

    def _init_params(self, rng):
        self._weights = rng.random(self.n_features)
        self._threshold = 0.5 * self._weights.sum()

    def _sample(self, rng, n):
        feats = rng.random((n, self.n_features))
        label = (feats @ self._weights >= self._threshold).astype(float)
        return np.hstack([feats, label[:, None]])


class ResampledConcept(ConceptSource):
    """Uniform draws with replacement from a fixed sample pool."""

    def __init__(self, pool: np.ndarray, seed=0):
        pool = np.asarray(pool, dtype=float)
        if pool.ndim != 2 or pool.shape[0] == 0:
            raise ConfigurationError("resample pool must be a non-empty 2-d array")
        self.pool = pool
        super().__init__(seed)

    @property
    def dim(self) -> int:
        return self.pool.shape[1]

    def _sample(self, rng, n):
        idx = rng.integers(0, self.pool.shape[0], size=n)
        return self.pool[idx].copy()


@dataclass(frozen=True)
class StreamSpec:
    """Recipe for one composed benchmark stream.

    The stream has three segments: warmup (500 + delta samples), drift
    (500 samples containing the concept switches), and cool-down
    (600 - delta samples). Warmup and cool-down continue the adjacent
    drift-segment concept, so only the switches inside the drift segment
    are change points.
    """

    pattern: str
    concepts: tuple[ConceptSource, ...]
    b_length: int = 50
    delta: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ConfigurationError(f"pattern must be one of {PATTERNS}, got {self.pattern!r}")
        if self.pattern != "AB" and self.b_length not in B_LENGTHS:
            raise ConfigurationError(f"b_length must be one of {B_LENGTHS}, got {self.b_length}")
        if not 0 <= self.delta <= 100:
            raise ConfigurationError(f"delta must lie in [0, 100], got {self.delta}")
        needed = 3 if self.pattern == "ABC" else 2
        if len(self.concepts) < needed:
            raise ConfigurationError(
                f"pattern {self.pattern} needs {needed} concepts, got {len(self.concepts)}"
            )
        object.__setattr__(self, "concepts", tuple(self.concepts))


def compose_stream(spec: StreamSpec) -> tuple[Stream, GroundTruth]:
    """Compose a 1600-sample stream and its ground-truth change points.

    Deterministic: repeated calls with the same spec yield bit-identical
    output (all concept sources are rebound to seeds derived from spec.seed).
    """
    w_len = WARMUP_BASE + spec.delta
    o_len = COOLDOWN_BASE - spec.delta
    if spec.pattern == "AB":
        half = DRIFT_SEGMENT_LENGTH // 2
        arrangement = [(0, w_len + half), (1, half + o_len)]
        cps = (w_len + half,)
    else:
        outer = (DRIFT_SEGMENT_LENGTH - spec.b_length) // 2
        last = 0 if spec.pattern == "ABA" else 2
        arrangement = [
            (0, w_len + outer),
            (1, spec.b_length),
            (last, outer + o_len),
        ]
        cps = (w_len + outer, w_len + outer + spec.b_length)

    used = sorted({i for i, _ in arrangement})
    for i in used:
        spec.concepts[i].reseed((spec.seed, i))

    blocks = [spec.concepts[i].draw(n) for i, n in arrangement]
    x = np.vstack(blocks)
    assert x.shape[0] == STREAM_LENGTH
    stream = Stream(x, np.arange(STREAM_LENGTH))
    return stream, GroundTruth(change_points=cps, pattern=spec.pattern)


def normalize_stream(stream: Stream) -> Stream:
    """Scale each feature to mean 0, unit population variance over the stream.

    Zero-variance features map to all-zeros.
    """
    if len(stream) == 0:
        raise ValueError("cannot normalize an empty stream")
    if len(stream) < 2:
        raise ValueError("normalization needs at least 2 samples")
    mu = stream.x.mean(axis=0)
    std = stream.x.std(axis=0)
    out = np.zeros_like(stream.x)
    nz = std > 0
    out[:, nz] = (stream.x[:, nz] - mu[nz]) / std[nz]
    return Stream(out, stream.times)


def ingest_csv(
    path,
    label_column: str | None = None,
    time_window_resample: tuple[int, int, int] | None = None,
    one_hot_label: bool = False,
) -> Stream:
    """Read a headered numeric CSV into a stream.

    If `label_column` is given, that column is appended after the remaining
    features (non-numeric labels require `one_hot_label=True`). If
    `time_window_resample=(window_count, samples_per_window, seed)` is given,
    rows are split into contiguous windows and each window is resampled
    uniformly with replacement, which removes any drift inside a window.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path}: no header row")
    header, body = rows[0], rows[1:]
    if not body:
        raise IngestionError(f"{path}: no data rows")

    if label_column is not None and label_column not in header:
        raise ConfigurationError(f"label column {label_column!r} not found in header {header}")
    label_idx = header.index(label_column) if label_column is not None else None
    feature_idx = [j for j in range(len(header)) if j != label_idx]

    feats = np.empty((len(body), len(feature_idx)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise IngestionError(
                f"expected {len(header)} cells, got {len(row)}", row=i + 2
            )
        for k, j in enumerate(feature_idx):
            try:
                feats[i, k] = float(row[j])
            except ValueError:
                raise IngestionError(
                    f"non-numeric cell {row[j]!r}", row=i + 2, column=header[j]
                ) from None

    if label_idx is not None:
        raw = [row[label_idx] for row in body]
        try:
            label_cols = np.array([[float(v)] for v in raw])
        except ValueError:
            if not one_hot_label:
                raise ConfigurationError(
                    f"label column {label_column!r} is not numeric; "
                    "pass one_hot_label=True to encode it"
                ) from None
            cats = sorted(set(raw))
            label_cols = np.zeros((len(raw), len(cats)))
            lookup = {c: k for k, c in enumerate(cats)}
            for i, v in enumerate(raw):
                label_cols[i, lookup[v]] = 1.0
        x = np.hstack([feats, label_cols])
    else:
        x = feats

    if time_window_resample is not None:
        window_count, per_window, seed = time_window_resample
        if window_count < 1 or per_window < 1:
            raise ConfigurationError("window_count and samples_per_window must be positive")
        if window_count > x.shape[0]:
            raise ConfigurationError(
                f"cannot split {x.shape[0]} rows into {window_count} windows"
            )
        rng = np.random.default_rng(seed)
        chunks = np.array_split(np.arange(x.shape[0]), window_count)
        picked = np.concatenate([rng.choice(c, size=per_window, replace=True) for c in chunks])
        x = x[picked]

    return Stream(x, np.arange(x.shape[0]))


def csv_concept_pools(path, window_count: int, label_column: str | None = None,
                      one_hot_label: bool = False) -> list[np.ndarray]:
    """Split a CSV into contiguous time windows and return one pool per window.

    Each pool can seed a ResampledConcept, turning a real dataset's time
    windows into benchmark concepts.
    """
    stream = ingest_csv(path, label_column=label_column, one_hot_label=one_hot_label)
    if window_count < 1 or window_count > len(stream):
        raise ConfigurationError(f"cannot split {len(stream)} rows into {window_count} windows")
    return [stream.x[c] for c in np.array_split(np.arange(len(stream)), window_count)]


def make_concepts(dataset: str, pattern: str, seed: int = 0,
                  pools: Sequence[np.ndarray] | None = None) -> tuple[ConceptSource, ...]:
    """Build the concept tuple for one benchmark dataset and pattern.

    Known datasets: "stagger" (rules 1/2/3), "rbf" (RandomRBF), "hyperplane",
    and "resampled" (requires `pools`). compose_stream reseeds the sources,
    so `seed` only fixes concept parameters drawn at construction time.
    """
    n = 3 if pattern == "ABC" else 2
    key = _as_key(seed)
    if dataset == "stagger":
        return tuple(StaggerConcept(rule=i + 1, seed=(*key, i)) for i in range(n))
    if dataset == "rbf":
        return tuple(RandomRbfConcept(seed=(*key, i)) for i in range(n))
    if dataset == "hyperplane":
        return tuple(HyperplaneConcept(seed=(*key, i)) for i in range(n))
    if dataset == "resampled":
        if pools is None or len(pools) < n:
            raise ConfigurationError(f"dataset 'resampled' needs at least {n} pools")
        return tuple(ResampledConcept(pools[i], seed=(*key, i)) for i in range(n))
    raise ConfigurationError(f"unknown dataset {dataset!r}")


def write_stream_jsonl(stream: Stream, path) -> None:
    """One JSON object per line: {"t": int, "x": [floats]}."""
    with Path(path).open("w") as fh:
        for i in range(len(stream)):
            fh.write(json.dumps({"t": int(stream.times[i]), "x": stream.x[i].tolist()}))
            fh.write("\n")


def read_stream_jsonl(path) -> Stream:
    xs, ts = [], []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ts.append(int(obj["t"]))
                xs.append([float(v) for v in obj["x"]])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise IngestionError("malformed stream line", row=lineno) from None
    if not xs:
        raise IngestionError(f"{path}: empty stream file")
    widths = {len(v) for v in xs}
    if len(widths) != 1:
        raise IngestionError(f"{path}: inconsistent feature dimensions {sorted(widths)}")
    return Stream(np.array(xs), np.array(ts))


def write_ground_truth(truth: GroundTruth, path) -> None:
    with Path(path).open("w") as fh:
        json.dump({"pattern": truth.pattern, "change_points": list(truth.change_points)}, fh)
        fh.write("\n")


def read_ground_truth(path) -> GroundTruth:
    with Path(path).open() as fh:
        obj = json.load(fh)
    return GroundTruth(change_points=tuple(int(t) for t in obj["change_points"]),
                       pattern=str(obj["pattern"]))
