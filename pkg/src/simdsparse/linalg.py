"""Dense float32 primitives used by training, inference, and benchmarks.

Matrices are plain row-major float32 numpy arrays; vectors are 1-D float32
arrays. `gemv` runs the same jitted row loop the benchmarks use as their
dense baseline, so timing comparisons against the sparse kernels compare
like with like.
"""

from __future__ import annotations

import numpy as np

from .kernels import dense_gemv_kernel, saxpy_kernel
from .validation import as_matrix, as_vector, check_gemv_shapes

__all__ = ["gemv", "saxpy"]


def gemv(a, x, out=None) -> np.ndarray:
    """Matrix-vector product y = A x with per-row float32 accumulation."""
    a = as_matrix(a, "a")
    x = as_vector(x, "x")
    check_gemv_shapes(a, x)
    if out is None:
        out = np.empty(a.shape[0], dtype=np.float32)
    elif out.shape != (a.shape[0],) or out.dtype != np.float32:
        raise ValueError(
            f"out must be float32 with shape ({a.shape[0]},), "
            f"got {out.dtype} {out.shape}"
        )
    return dense_gemv_kernel(a, x, out)


def saxpy(alpha: float, x, y) -> np.ndarray:
    """Scaled vector add: alpha * x + y."""
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"dimension mismatch: x has {x.shape[0]} elements "
            f"but y has {y.shape[0]} elements"
        )
    out = np.empty_like(x)
    return saxpy_kernel(np.float32(alpha), x, y, out)
