"""Benchmark harness for gemv kernels and the autoregressive decode loop.

Every reported figure is the median over at least 30 timed repetitions,
taken after discarding warmup calls, with BLAS/OpenMP thread pools pinned
to one thread so numbers are stable across machines and run lengths.
"""

from __future__ import annotations

import math
import platform
import time

import numpy as np
from threadpoolctl import threadpool_limits

from .inference import model_dims, prepare_block_call, prepare_dense_call
from .kernels import csr_gemv_kernel, dense_gemv_kernel
from .pruning import apply_mask, compute_group_mask
from .sparse import BlockSparseMatrix, ScalarSparseMatrix

__all__ = ["MIN_REPS", "bench_gemv", "bench_rtf", "machine_descriptor"]

MIN_REPS = 30


def machine_descriptor() -> str:
    return (f"{platform.system()} {platform.machine()} / "
            f"python {platform.python_version()}")


def _timed_ns(fn, reps: int, warmup: int = 5) -> dict:
    """Median/p10/p90 wall time of fn() in nanoseconds over `reps` calls."""
    if reps < MIN_REPS:
        raise ValueError(f"reps must be at least {MIN_REPS}, got {reps}")
    for _ in range(warmup):
        fn()
    samples = np.empty(reps, dtype=np.float64)
    for i in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples[i] = time.perf_counter_ns() - t0
    return {
        "median_ns": float(np.median(samples)),
        "p10_ns": float(np.percentile(samples, 10)),
        "p90_ns": float(np.percentile(samples, 90)),
        "reps": int(reps),
    }


def bench_gemv(sizes, sparsities, group_size: int, reps: int,
               seed: int) -> dict:
    """Time dense, scalar-sparse and block-sparse gemv on masked matrices.

    All three kernels see the same masked weights for each (size, sparsity)
    cell, so the comparison isolates storage format and kernel shape.
    """
    if reps < MIN_REPS:
        raise ValueError(f"reps must be at least {MIN_REPS}, got {reps}")
    rng = np.random.default_rng(seed)
    results = []
    speedups = []
    with threadpool_limits(limits=1):
        for size in sizes:
            if size % group_size != 0:
                raise ValueError(
                    f"size {size} is not divisible by group size {group_size}"
                )
            for sparsity in sparsities:
                if not 0.0 <= sparsity < 1.0:
                    raise ValueError(
                        f"sparsity must be in [0, 1), got {sparsity}"
                    )
                w = rng.uniform(-1.0, 1.0,
                                size=(size, size)).astype(np.float32)
                mask = compute_group_mask(w, group_size, sparsity)
                wm = apply_mask(w, mask)
                x = rng.uniform(-1.0, 1.0, size=size).astype(np.float32)
                out = np.empty(size, dtype=np.float32)

                bsr = BlockSparseMatrix.from_masked_dense(wm, mask,
                                                          group_size)
                csr = ScalarSparseMatrix.from_masked_dense(wm, mask)

                cell = {}
                for kernel, fn in (
                    ("dense", lambda: dense_gemv_kernel(wm, x, out)),
                    ("csr", lambda: csr_gemv_kernel(
                        csr.row_offsets, csr.col_indices, csr.values,
                        x, out)),
                    ("bsr", lambda: bsr.gemv(x, out)),
                ):
                    stats = _timed_ns(fn, reps)
                    stats.update(size=int(size), sparsity=float(sparsity),
                                 kernel=kernel)
                    results.append(stats)
                    cell[kernel] = stats["median_ns"]
                speedups.append({
                    "size": int(size),
                    "sparsity": float(sparsity),
                    "bsr_vs_dense": cell["dense"] / cell["bsr"],
                    "csr_vs_dense": cell["dense"] / cell["csr"],
                    "bsr_vs_csr": cell["csr"] / cell["bsr"],
                })
    return {
        "kind": "bench-gemv",
        "machine": machine_descriptor(),
        "seed": int(seed),
        "group_size": int(group_size),
        "reps": int(reps),
        "sizes": [int(s) for s in sizes],
        "sparsities": [float(s) for s in sparsities],
        "results": results,
        "speedups": speedups,
    }


def bench_rtf(params: dict, masks: dict, group_size: int, seconds: float,
              sample_rate: int, reps: int, seed: int) -> dict:
    """Real-time factor of the decode loop on dense and block-sparse paths.

    RTF = inference wall time / duration of the generated audio. The decoder
    emits `bands` subband samples per subband step, so `seconds` of audio at
    `sample_rate` Hz spans sample_rate * seconds / bands subband steps.
    """
    if seconds <= 0:
        raise ValueError(f"seconds must be positive, got {seconds}")
    if reps < MIN_REPS:
        raise ValueError(f"reps must be at least {MIN_REPS}, got {reps}")
    hidden, bands, m_steps, cond_dim = model_dims(params)
    n_sub = int(round(seconds * sample_rate / bands))
    n_inv = max(1, math.ceil(n_sub / m_steps))
    t_data = n_inv * m_steps * bands / sample_rate
    rng = np.random.default_rng(seed)
    cond = np.tanh(0.8 * rng.standard_normal(cond_dim)).astype(np.float32)
    eps = rng.standard_normal((n_inv, m_steps, bands)).astype(np.float32)

    paths = {}
    with threadpool_limits(limits=1):
        for name, prepared in (
            ("dense", prepare_dense_call(params, masks, cond, eps)),
            ("block", prepare_block_call(params, masks, group_size, cond,
                                         eps)),
        ):
            gen, args, _out = prepared
            gen(*args)  # warmup covers jit compilation
            samples = np.empty(reps, dtype=np.float64)
            for i in range(reps):
                t0 = time.perf_counter()
                gen(*args)
                samples[i] = time.perf_counter() - t0
            t_inf = float(np.median(samples))
            paths[name] = {
                "t_inference_s": t_inf,
                "t_data_s": t_data,
                "rtf": t_inf / t_data,
                "p10_s": float(np.percentile(samples, 10)),
                "p90_s": float(np.percentile(samples, 90)),
                "reps": int(reps),
            }
    return {
        "kind": "bench-rtf",
        "machine": machine_descriptor(),
        "seed": int(seed),
        "seconds": float(seconds),
        "sample_rate": int(sample_rate),
        "subband_steps": int(n_inv * m_steps),
        "reps": int(reps),
        "paths": paths,
    }
