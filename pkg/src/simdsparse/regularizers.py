"""Sparsity-inducing penalties and their (sub)gradients.

Three penalties over a weight matrix W:

* ``Lasso``: elementwise L1, sum_ij |W_ij|. Drives individual weights to
  zero with no structure.
* ``ColumnGroupLasso``: sum over columns of the column L2 norm. Drives
  whole columns to zero, which removes input features but does not help
  a kernel that loads contiguous row segments.
* ``BlockGroupLasso``: each row is split into contiguous segments of
  ``group_size`` entries and the penalty is the sum of segment L2 norms.
  Entire register-width blocks go to zero together, matching the block
  layout the sparse gemv kernels consume.

Gradients follow the subgradient convention sign(0) = 0; for the group
penalties the gradient of a group with norm <= EPS_NORM is zero.
"""

from __future__ import annotations

import numpy as np

from .validation import as_matrix, check_group_width

__all__ = [
    "EPS_NORM",
    "Lasso",
    "ColumnGroupLasso",
    "BlockGroupLasso",
    "combined_objective",
    "regularizer_from_name",
    "REGULARIZER_NAMES",
]

EPS_NORM = 1e-12


def _as_float_matrix(w) -> np.ndarray:
    w = np.asarray(w)
    dtype = w.dtype if w.dtype in (np.float32, np.float64) else np.float64
    return as_matrix(w, "w", dtype=dtype)


class Lasso:
    """Elementwise L1 penalty."""

    def value(self, w) -> float:
        w = _as_float_matrix(w)
        return float(np.abs(w, dtype=np.float64).sum())

    def grad(self, w) -> np.ndarray:
        w = _as_float_matrix(w)
        return np.sign(w)

    def value_and_grad(self, w):
        w = _as_float_matrix(w)
        return float(np.abs(w, dtype=np.float64).sum()), np.sign(w)


class ColumnGroupLasso:
    """Sum of column L2 norms."""

    def value(self, w) -> float:
        w = _as_float_matrix(w)
        return float(np.linalg.norm(w.astype(np.float64), axis=0).sum())

    def grad(self, w) -> np.ndarray:
        return self.value_and_grad(w)[1]

    def value_and_grad(self, w):
        w = _as_float_matrix(w)
        norms = np.linalg.norm(w.astype(np.float64), axis=0)
        safe = np.where(norms > EPS_NORM, norms, 1.0)
        grad = (w / safe).astype(w.dtype, copy=False)
        grad[:, norms <= EPS_NORM] = 0
        return float(norms.sum()), grad


class BlockGroupLasso:
    """Sum of L2 norms over contiguous width-`group_size` row segments."""

    def __init__(self, group_size: int):
        if group_size < 1:
            raise ValueError(f"group_size must be >= 1, got {group_size}")
        self.group_size = int(group_size)

    def value(self, w) -> float:
        return self.value_and_grad(w)[0]

    def grad(self, w) -> np.ndarray:
        return self.value_and_grad(w)[1]

    def value_and_grad(self, w):
        w = _as_float_matrix(w)
        rows, cols = w.shape
        check_group_width(cols, self.group_size)
        g = self.group_size
        t = w.astype(np.float64).reshape(rows, cols // g, g)
        norms = np.sqrt((t * t).sum(axis=2))
        safe = np.where(norms > EPS_NORM, norms, 1.0)
        grad64 = t / safe[:, :, None]
        grad64[norms <= EPS_NORM, :] = 0
        grad = grad64.reshape(rows, cols).astype(w.dtype, copy=False)
        return float(norms.sum()), grad


def combined_objective(task_loss: float, reg_value: float, lam: float) -> float:
    """Total training objective: task loss plus lam times the penalty."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    return float(task_loss) + float(lam) * float(reg_value)


REGULARIZER_NAMES = ("none", "lasso", "group_col", "group_block")


def regularizer_from_name(name: str, group_size: int = 16):
    """Build a penalty object from its config name; "none" returns None."""
    if name == "none":
        return None
    if name == "lasso":
        return Lasso()
    if name == "group_col":
        return ColumnGroupLasso()
    if name == "group_block":
        return BlockGroupLasso(group_size)
    raise ValueError(
        f"unknown regularizer {name!r}, expected one of {REGULARIZER_NAMES}"
    )
