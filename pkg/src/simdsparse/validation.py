"""Input validation helpers shared by the public API surface."""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "as_vector",
    "check_gemv_shapes",
    "check_group_width",
    "check_mask_shape",
]


def as_matrix(a, name: str = "matrix", dtype=np.float32) -> np.ndarray:
    """Coerce to a C-contiguous 2-D array of the given dtype."""
    out = np.ascontiguousarray(a, dtype=dtype)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got {out.ndim}-D")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {out.shape}")
    return out


def as_vector(a, name: str = "vector", dtype=np.float32) -> np.ndarray:
    """Coerce to a C-contiguous 1-D array of the given dtype."""
    out = np.ascontiguousarray(a, dtype=dtype)
    if out.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got {out.ndim}-D")
    return out


def check_gemv_shapes(a: np.ndarray, x: np.ndarray) -> None:
    """Require A.cols == len(x), naming both dimensions in the error."""
    if a.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix has {a.shape[1]} columns "
            f"but vector has {x.shape[0]} elements"
        )


def check_group_width(cols: int, group_size: int) -> None:
    """Require a positive group width that evenly divides the column count."""
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    if cols % group_size != 0:
        raise ValueError(
            f"column count {cols} is not divisible by group width {group_size}"
        )


def check_mask_shape(w: np.ndarray, mask: np.ndarray) -> None:
    if w.shape != mask.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match weight shape {w.shape}"
        )
