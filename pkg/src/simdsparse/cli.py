"""Command line interface: train, bench-gemv, bench-rtf, heatmap.

Exit codes: 0 success, 1 usage error (bad flags or malformed config),
2 runtime failure (unreadable checkpoint, training divergence, ...).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .bench import MIN_REPS, bench_gemv, bench_rtf
from .checkpoint import (heatmap_image, load_checkpoint, save_checkpoint,
                         write_matrix_csv, write_pgm, write_trace_csv)
from .data import SignalTaskConfig, make_dataset
from .trainer import TrainConfig, TrainingDiverged, train

__all__ = ["main", "build_parser", "UsageError"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Bad invocation or malformed config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2
    # for runtime failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise UsageError(f"config {path!r} must be a JSON object")
    return obj


def _build_configs(obj: dict, seed_override):
    """Split a config dict into TrainConfig + SignalTaskConfig + data seed."""
    data_obj = dict(obj.get("data", {}))
    train_obj = {k: v for k, v in obj.items() if k != "data"}

    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(train_obj) - train_fields)
    if unknown:
        raise UsageError(f"unknown config field(s): {', '.join(unknown)}")
    if seed_override is not None:
        train_obj["seed"] = seed_override
    try:
        train_cfg = TrainConfig(**train_obj)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc

    data_seed = data_obj.pop("seed", train_cfg.seed + 1)
    if "omega_ranges" in data_obj:
        data_obj["omega_ranges"] = tuple(
            tuple(float(x) for x in r) for r in data_obj["omega_ranges"])
    if "amp_range" in data_obj:
        data_obj["amp_range"] = tuple(float(x)
                                      for x in data_obj["amp_range"])
    data_fields = {f.name for f in dataclasses.fields(SignalTaskConfig)}
    unknown = sorted(set(data_obj) - data_fields)
    if unknown:
        raise UsageError(
            f"unknown config field(s) in data: {', '.join(unknown)}")
    data_obj.setdefault("bands", train_cfg.bands)
    data_obj.setdefault("cond_dim", train_cfg.cond_dim)
    if data_obj["bands"] != train_cfg.bands:
        raise UsageError("config field data.bands must match bands")
    if data_obj["cond_dim"] != train_cfg.cond_dim:
        raise UsageError("config field data.cond_dim must match cond_dim")
    try:
        data_cfg = SignalTaskConfig(**data_obj)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    return train_cfg, data_cfg, int(data_seed)


def _parse_num_list(text: str, cast, what: str):
    try:
        values = [cast(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise UsageError(f"cannot parse {what} {text!r}") from exc
    if not values:
        raise UsageError(f"empty {what} list")
    return values


def cmd_train(args) -> int:
    obj = _load_json(args.config)
    train_cfg, data_cfg, data_seed = _build_configs(obj, args.seed)
    dataset = make_dataset(data_cfg, seed=data_seed)
    result = train(train_cfg, dataset)

    config_echo = dataclasses.asdict(train_cfg)
    config_echo["data"] = dataclasses.asdict(data_cfg)
    config_echo["data"]["seed"] = data_seed
    save_checkpoint(args.out, config_echo, result.steps, result.params,
                    result.masks, train_cfg.group_size)
    trace_path = args.trace
    if trace_path is None:
        trace_path = os.path.splitext(args.out)[0] + "_trace.csv"
    write_trace_csv(trace_path, result.trace)

    kept = sum(int(m.sum()) for m in result.masks.values())
    total = sum(m.size for m in result.masks.values())
    summary = {
        "checkpoint": args.out,
        "trace": trace_path,
        "steps": result.steps,
        "val_nll": result.val_nll,
        "val_nll_pre_prune": result.val_nll_pre_prune,
        "sparsity": 1.0 - kept / total if total else 0.0,
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_bench_gemv(args) -> int:
    sizes = _parse_num_list(args.sizes, int, "--sizes")
    sparsities = _parse_num_list(args.sparsity, float, "--sparsity")
    if args.reps < MIN_REPS:
        raise UsageError(f"--reps must be at least {MIN_REPS}")
    if args.group <= 0:
        raise UsageError("--group must be positive")
    for size in sizes:
        if size <= 0 or size % args.group != 0:
            raise UsageError(
                f"--sizes entries must be positive multiples of --group "
                f"{args.group}, got {size}")
    for s in sparsities:
        if not 0.0 <= s < 1.0:
            raise UsageError(f"--sparsity entries must be in [0, 1), got {s}")

    report = bench_gemv(sizes, sparsities, args.group, args.reps, args.seed)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
    print(f"# {report['machine']}  group={args.group} reps={args.reps}")
    print(f"{'size':>6} {'sparsity':>9} {'kernel':>6} {'median_us':>10} "
          f"{'p10_us':>9} {'p90_us':>9}")
    for row in report["results"]:
        print(f"{row['size']:>6d} {row['sparsity']:>9.2f} "
              f"{row['kernel']:>6} {row['median_ns'] / 1e3:>10.2f} "
              f"{row['p10_ns'] / 1e3:>9.2f} {row['p90_ns'] / 1e3:>9.2f}")
    for s in report["speedups"]:
        print(f"size {s['size']} sparsity {s['sparsity']:.2f}: "
              f"bsr {s['bsr_vs_dense']:.2f}x vs dense, "
              f"{s['bsr_vs_csr']:.2f}x vs csr")
    return EXIT_OK


def cmd_bench_rtf(args) -> int:
    if args.seconds <= 0:
        raise UsageError("--seconds must be positive")
    if args.reps < MIN_REPS:
        raise UsageError(f"--reps must be at least {MIN_REPS}")
    ck = load_checkpoint(args.checkpoint)
    group_size = ck["group_size"] if ck["group_size"] else args.group
    report = bench_rtf(ck["params"], ck["masks"], group_size, args.seconds,
                       args.rate, args.reps, args.seed)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
    print(f"# {report['machine']}  {args.seconds:g}s at {args.rate} Hz, "
          f"reps={args.reps}")
    for name, st in report["paths"].items():
        print(f"{name:>6}: rtf {st['rtf']:.4f}  "
              f"(inference {st['t_inference_s']:.4f}s / "
              f"data {st['t_data_s']:.4f}s)")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    params = ck["params"]
    layer = args.layer
    if layer not in params or params[layer].ndim != 2:
        names = sorted(k for k, v in params.items() if v.ndim == 2)
        raise ValueError(
            f"layer {layer!r} is not a matrix in this checkpoint; "
            f"available: {', '.join(names)}")
    w = params[layer]
    write_pgm(args.out, heatmap_image(w))
    csv_path = args.csv
    if csv_path is None:
        csv_path = os.path.splitext(args.out)[0] + ".csv"
    write_matrix_csv(csv_path, w)
    print(f"wrote {args.out} and {csv_path} "
          f"({w.shape[0]}x{w.shape[1]}, max |w| = {abs(w).max():.6g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simdsparse",
                     description="SIMD-width-aware sparsity toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a decoder from a JSON config")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--trace", default=None,
                   help="loss trace CSV (default: <out>_trace.csv)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench-gemv", help="benchmark gemv kernels")
    p.add_argument("--sizes", default="256,1024",
                   help="comma-separated square matrix sizes")
    p.add_argument("--sparsity", default="0.7",
                   help="comma-separated sparsity fractions in [0, 1)")
    p.add_argument("--group", type=int, default=16, help="SIMD group width")
    p.add_argument("--reps", type=int, default=100,
                   help=f"timed repetitions per kernel (>= {MIN_REPS})")
    p.add_argument("--out", default=None, help="JSON report path")
    p.add_argument("--seed", type=int, default=0, help="matrix RNG seed")
    p.set_defaults(func=cmd_bench_gemv)

    p = sub.add_parser("bench-rtf",
                       help="benchmark the autoregressive decode loop")
    p.add_argument("--checkpoint", required=True, help="checkpoint JSON")
    p.add_argument("--seconds", type=float, default=10.0,
                   help="audio duration to generate")
    p.add_argument("--rate", type=int, default=22050,
                   help="output sample rate in Hz")
    p.add_argument("--reps", type=int, default=MIN_REPS,
                   help=f"timed repetitions per path (>= {MIN_REPS})")
    p.add_argument("--group", type=int, default=16,
                   help="SIMD group width if the checkpoint has no masks")
    p.add_argument("--out", default=None, help="JSON report path")
    p.add_argument("--seed", type=int, default=0,
                   help="conditioning/noise RNG seed")
    p.set_defaults(func=cmd_bench_rtf)

    p = sub.add_parser("heatmap",
                       help="export a weight-magnitude PGM image")
    p.add_argument("--checkpoint", required=True, help="checkpoint JSON")
    p.add_argument("--layer", required=True,
                   help="matrix name, e.g. fc1 or gru_wr")
    p.add_argument("--out", required=True, help="output PGM path")
    p.add_argument("--csv", default=None,
                   help="raw values CSV (default: <out>.csv)")
    p.add_argument("--seed", type=int, default=0,
                   help="unused; accepted for interface uniformity")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"simdsparse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"simdsparse: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, KeyError) as exc:
        print(f"simdsparse: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
