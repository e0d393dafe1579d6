"""Command-line surface: stream generation, detection, benchmarking,
theory verification, and plot-data export.

Exit codes: 0 success, 1 data error, 2 usage or configuration error. The
environment variable DRIFTLAB_SEED provides the seed when --seed is absent.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import baselines, detector, evaluation, verify
from .kernels import MomentForestKernel, RbfKernel, compute_kernel_matrix
from .spectral import laplacian, smallest_eigenvectors
from .streams import (
    ConfigurationError,
    IngestionError,
    StreamSpec,
    compose_stream,
    make_concepts,
    normalize_stream,
    read_stream_jsonl,
    write_ground_truth,
    write_stream_jsonl,
)

SYNTHETIC_DATASETS = ("stagger", "rbf", "hyperplane")
METHOD_NAMES = ("sddm-mt", "sddm-rbf", "mmdddm", "kswin")

_BENCHMARK_KEYS = {
    "datasets", "methods", "patterns", "b_lengths", "n_runs", "beta",
    "max_delay", "master_seed", "jobs", "output_dir", "alignment_shifts",
}


def _env_seed() -> int:
    raw = os.environ.get("DRIFTLAB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"DRIFTLAB_SEED must be an integer, got {raw!r}") from None


def _resolve_seed(args) -> int:
    return args.seed if args.seed is not None else _env_seed()


def load_config(path) -> dict:
    """Parse a TOML config file, falling back to JSON."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(data)
    try:
        return tomllib.loads(data.decode("utf-8"))
    except tomllib.TOMLDecodeError:
        try:
            return json.loads(data)
        except json.JSONDecodeError:
            raise ConfigurationError(f"{path} is neither valid TOML nor JSON") from None


def _truth_sidecar(out: Path) -> Path:
    return out.with_name(out.stem + ".truth.json")


def cmd_generate(args) -> int:
    seed = _resolve_seed(args)
    delta = args.delta
    if delta is None:
        delta = int(np.random.default_rng((seed, 0xD17A)).integers(0, 101))
    concepts = make_concepts(args.dataset, args.pattern, seed=seed)
    spec = StreamSpec(pattern=args.pattern, concepts=concepts,
                      b_length=args.b, delta=delta, seed=seed)
    stream, truth = compose_stream(spec)
    if args.normalize:
        stream = normalize_stream(stream)
    out = Path(args.out)
    write_stream_jsonl(stream, out)
    write_ground_truth(truth, _truth_sidecar(out))
    print(f"wrote {len(stream)} samples to {out} "
          f"(change points {list(truth.change_points)})")
    return 0


def _build_methods(args, seed: int) -> dict:
    overrides = load_config(args.config) if getattr(args, "config", None) else {}
    sddm_kwargs = overrides.get("sddm", {})
    baseline_kwargs = overrides.get("baseline", {})
    try:
        sddm_cfg = detector.SddmConfig(seed=seed, **sddm_kwargs)
        base_cfg = baselines.BaselineConfig(seed=seed, **baseline_kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"bad detector config: {exc}") from None
    return evaluation.standard_methods(sddm_cfg, base_cfg)


def cmd_detect(args) -> int:
    seed = _resolve_seed(args)
    stream = read_stream_jsonl(args.stream)
    methods = _build_methods(args, seed)
    method = methods[args.method]
    if args.method.startswith("sddm"):
        report = detector.sddm_stream(stream, dataclasses.replace(
            method.config, seed=seed))
        payload = report.to_json_dict()
    else:
        events = method(stream, seed)
        payload = {"events": [{"t": t, "support": 1} for t in events],
                   "raw": [{"t": t, "batch": i} for i, t in enumerate(events)],
                   "cv_scores": []}
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_benchmark(args) -> int:
    raw = load_config(args.config)
    cfg = raw.get("benchmark", raw)
    unknown = set(cfg) - _BENCHMARK_KEYS
    if unknown:
        raise ConfigurationError(
            f"unknown benchmark config key(s): {', '.join(sorted(unknown))}"
        )
    datasets = cfg.get("datasets", ["stagger"])
    for name in datasets:
        if name not in SYNTHETIC_DATASETS:
            raise ConfigurationError(
                f"unknown dataset {name!r}; expected one of {SYNTHETIC_DATASETS}"
            )
    method_names = cfg.get("methods", ["sddm-mt"])
    for name in method_names:
        if name not in METHOD_NAMES:
            raise ConfigurationError(
                f"unknown method {name!r}; expected one of {METHOD_NAMES}"
            )
    master_seed = args.seed if args.seed is not None else int(cfg.get("master_seed", _env_seed()))
    eval_cfg = evaluation.EvaluationConfig(
        beta=float(cfg.get("beta", 0.5)),
        max_delay=cfg.get("max_delay"),
        n_runs=int(args.n_runs or cfg.get("n_runs", 10)),
        master_seed=master_seed,
        alignment_shifts=cfg.get("alignment_shifts", {}),
    )
    all_methods = evaluation.standard_methods()
    methods = {name: all_methods[name] for name in method_names}
    ds = {name: evaluation.synthetic_dataset(name) for name in datasets}
    jobs = args.jobs or int(cfg.get("jobs", 1))
    out_dir = Path(args.output_dir or cfg.get("output_dir", "benchmark-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, _ = evaluation.run_benchmark(
        ds, methods,
        patterns=cfg.get("patterns", ["AB"]),
        b_lengths=[int(b) for b in cfg.get("b_lengths", [50])],
        config=eval_cfg, jobs=jobs,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    evaluation.write_benchmark_csv(rows, out_dir / "benchmark.csv")
    evaluation.write_benchmark_json(rows, out_dir / "benchmark.json")
    evaluation.write_benchmark_markdown(rows, out_dir / "benchmark.md")
    print(f"wrote {len(rows)} rows to {out_dir}/benchmark.{{csv,json,md}}")
    return 0


def _report_checks(checks) -> int:
    failed = 0
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{c.name}: deviation={c.deviation:.3e} tolerance={c.tolerance:.3e} "
              f"{status}" + (f" ({c.detail})" if c.detail else ""))
        failed += not c.passed
    return 1 if failed else 0


def cmd_verify_spectral(args) -> int:
    seed = _resolve_seed(args)
    identity = verify.identity_batch_check(
        n_matrices=args.n_matrices, max_n=args.max_n, seed=seed,
        tolerance_factor=args.tolerance_identity)
    eig, vec = verify.eigen_coincidence_batch_check(
        n_matrices=args.n_block_matrices, seed=seed, tolerance=args.tolerance_eigen)
    return _report_checks([identity, eig, vec])


def cmd_verify_shape(args) -> int:
    seed = _resolve_seed(args)
    result, check = verify.two_gaussian_shape_check(
        l=args.l, samples_per_concept=args.samples, seed=seed,
        tolerance=args.tolerance)
    code = _report_checks([result])
    print(f"noise floor (mmd^2): {check.noise_floor:.3e}")
    return code


def cmd_export_eigen(args) -> int:
    seed = _resolve_seed(args)
    stream = read_stream_jsonl(args.stream)
    start = args.start
    length = args.length if args.length is not None else len(stream) - start
    window = stream.slice(start, start + length)
    if len(window) < 2:
        raise ConfigurationError("selected window has fewer than 2 samples")
    kernel = MomentForestKernel(seed=seed) if args.method == "mt" else RbfKernel()
    k = compute_kernel_matrix(window.x, window.times, kernel)
    basis = smallest_eigenvectors(laplacian(k), args.k, window.times)
    with Path(args.out).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"v{j + 1}" for j in range(args.k)])
        for i in range(len(window)):
            writer.writerow([int(window.times[i])] +
                            [repr(v) for v in basis.vectors[i]])
    if args.kernel_csv:
        np.savetxt(args.kernel_csv, k.values, delimiter=",")
    print(f"wrote {len(window)} eigenvector rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftlab",
        description="Spectral drift detection and change-point benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None,
                       help="seed (default: $DRIFTLAB_SEED or 0)")

    p = sub.add_parser("generate", help="compose a benchmark stream")
    p.add_argument("--pattern", required=True, choices=("AB", "ABA", "ABC"))
    p.add_argument("--dataset", default="stagger", choices=SYNTHETIC_DATASETS)
    p.add_argument("--b", type=int, default=50, help="length of concept B")
    p.add_argument("--delta", type=int, default=None,
                   help="warmup extension in [0, 100] (default: drawn from seed)")
    p.add_argument("--normalize", action="store_true",
                   help="normalize the stream before writing")
    p.add_argument("--out", default="stream.jsonl")
    add_seed(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("detect", help="run a detector on a stream file")
    p.add_argument("stream", help="JSON-lines stream file")
    p.add_argument("--method", required=True, choices=METHOD_NAMES)
    p.add_argument("--config", default=None,
                   help="TOML/JSON file with [sddm] / [baseline] overrides")
    p.add_argument("--out", default=None, help="report path (default: stdout)")
    add_seed(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("benchmark", help="run the multi-run benchmark grid")
    p.add_argument("--config", required=True, help="TOML/JSON benchmark config")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--n-runs", type=int, default=None, dest="n_runs")
    p.add_argument("--output-dir", default=None, dest="output_dir")
    add_seed(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("verify-spectral", help="check the two matrix identities")
    p.add_argument("--n-matrices", type=int, default=100, dest="n_matrices")
    p.add_argument("--max-n", type=int, default=200, dest="max_n")
    p.add_argument("--n-block-matrices", type=int, default=25, dest="n_block_matrices")
    p.add_argument("--tolerance-identity", type=float, default=1e-10)
    p.add_argument("--tolerance-eigen", type=float, default=1e-8)
    add_seed(p)
    p.set_defaults(func=cmd_verify_spectral)

    p = sub.add_parser("verify-shape", help="check the magnitude profile shape")
    p.add_argument("--l", type=int, default=200, help="window length")
    p.add_argument("--samples", type=int, default=2000, help="samples per concept")
    p.add_argument("--tolerance", type=float, default=0.15)
    add_seed(p)
    p.set_defaults(func=cmd_verify_shape)

    p = sub.add_parser("export-eigen", help="dump eigenvector curves as CSV")
    p.add_argument("stream", help="JSON-lines stream file")
    p.add_argument("--method", default="mt", choices=("mt", "rbf"))
    p.add_argument("--k", type=int, default=5, help="number of eigenvectors")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--out", default="eigen.csv")
    p.add_argument("--kernel-csv", default=None, dest="kernel_csv",
                   help="also dump the kernel matrix to this CSV path")
    add_seed(p)
    p.set_defaults(func=cmd_export_eigen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IngestionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
