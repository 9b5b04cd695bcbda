"""Compressed storage for pruned matrices and the matching gemv front ends.

``BlockSparseMatrix`` stores whole width-``block_width`` row segments
(the unit the group penalty and the pruner operate on), so one column
index covers a contiguous run of values and the kernel can load both
sides as full vector registers. ``ScalarSparseMatrix`` is plain CSR with
per-element granularity; it is the baseline layout that unstructured
pruning would produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import (
    bsr_gemv_generic_kernel,
    csr_gemv_kernel,
    has_simd_width,
    simd_bsr_gemv,
)
from .validation import as_matrix, as_vector, check_group_width, check_mask_shape

__all__ = ["BlockSparseMatrix", "ScalarSparseMatrix"]


def _check_group_constant(mask: np.ndarray, group_size: int) -> np.ndarray:
    """Return per-group bits; reject masks that split a group."""
    rows, cols = mask.shape
    bits = np.asarray(mask) != 0
    grouped = bits.reshape(rows, cols // group_size, group_size)
    per_group = grouped.all(axis=2)
    mixed = grouped.any(axis=2) & ~per_group
    if mixed.any():
        r, g = np.argwhere(mixed)[0]
        raise ValueError(
            f"mask is not group-constant: row {int(r)}, group {int(g)} "
            f"(columns {int(g) * group_size}..{(int(g) + 1) * group_size - 1}) "
            "mixes kept and dropped entries"
        )
    return per_group


@dataclass
class BlockSparseMatrix:
    """Row-compressed storage of width-`block_width` column blocks."""

    rows: int
    cols: int
    block_width: int
    row_offsets: np.ndarray
    block_cols: np.ndarray
    block_values: np.ndarray

    @classmethod
    def from_masked_dense(cls, w, mask, block_width: int) -> "BlockSparseMatrix":
        """Compress ``w * mask``; keeps kept groups with any non-zero value.

        The mask must be constant within each width-`block_width` row
        segment. Blocks that are kept by the mask but identically zero in
        the masked weights are dropped, so every stored block carries at
        least one non-zero.
        """
        w = as_matrix(w, "w")
        mask = np.asarray(mask)
        check_mask_shape(w, mask)
        rows, cols = w.shape
        check_group_width(cols, block_width)
        kept_bits = _check_group_constant(mask, block_width)
        masked = (w * (mask != 0)).astype(np.float32)
        t = masked.reshape(rows, cols // block_width, block_width)
        keep = kept_bits & np.any(t != 0, axis=2)
        counts = keep.sum(axis=1)
        row_offsets = np.zeros(rows + 1, dtype=np.int64)
        np.cumsum(counts, out=row_offsets[1:])
        block_cols = np.nonzero(keep)[1].astype(np.int32)
        block_values = np.ascontiguousarray(t[keep].ravel(), dtype=np.float32)
        return cls(rows, cols, int(block_width), row_offsets, block_cols,
                   block_values)

    @property
    def n_blocks(self) -> int:
        return int(self.block_cols.shape[0])

    def density(self) -> float:
        """Stored fraction: blocks * width / (rows * cols)."""
        return self.n_blocks * self.block_width / (self.rows * self.cols)

    def validate(self) -> None:
        """Check structural invariants; raises ValueError on violation."""
        if self.row_offsets.shape != (self.rows + 1,):
            raise ValueError("row_offsets must have rows + 1 entries")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.n_blocks:
            raise ValueError("row_offsets must start at 0 and end at n_blocks")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if self.block_values.shape != (self.n_blocks * self.block_width,):
            raise ValueError("block_values length must be n_blocks * width")
        n_groups = self.cols // self.block_width
        for i in range(self.rows):
            cols = self.block_cols[self.row_offsets[i]:self.row_offsets[i + 1]]
            if cols.size and (np.any(np.diff(cols) <= 0)
                              or cols[0] < 0 or cols[-1] >= n_groups):
                raise ValueError(
                    f"block columns of row {i} must be strictly increasing "
                    f"and within [0, {n_groups})"
                )

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows, self.cols), dtype=np.float32)
        t = dense.reshape(self.rows, self.cols // self.block_width,
                          self.block_width)
        row_idx = np.repeat(np.arange(self.rows),
                            np.diff(self.row_offsets))
        t[row_idx, self.block_cols] = self.block_values.reshape(
            -1, self.block_width)
        return dense

    def gemv(self, x, out=None) -> np.ndarray:
        x = as_vector(x, "x")
        if x.shape[0] != self.cols:
            raise ValueError(
                f"dimension mismatch: matrix has {self.cols} columns "
                f"but vector has {x.shape[0]} elements"
            )
        if out is None:
            out = np.empty(self.rows, dtype=np.float32)
        if has_simd_width(self.block_width):
            kernel = simd_bsr_gemv(self.block_width)
            return kernel(self.row_offsets, self.block_cols,
                          self.block_values, x, out)
        return bsr_gemv_generic_kernel(self.row_offsets, self.block_cols,
                                       self.block_values, self.block_width,
                                       x, out)


@dataclass
class ScalarSparseMatrix:
    """Plain CSR with one column index per stored value."""

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_masked_dense(cls, w, mask=None) -> "ScalarSparseMatrix":
        """Compress the non-zero entries of ``w * mask`` (mask optional)."""
        w = as_matrix(w, "w")
        if mask is not None:
            mask = np.asarray(mask)
            check_mask_shape(w, mask)
            w = (w * (mask != 0)).astype(np.float32)
        rows, cols = w.shape
        keep = w != 0
        counts = keep.sum(axis=1)
        row_offsets = np.zeros(rows + 1, dtype=np.int64)
        np.cumsum(counts, out=row_offsets[1:])
        col_indices = np.nonzero(keep)[1].astype(np.int32)
        values = np.ascontiguousarray(w[keep], dtype=np.float32)
        return cls(rows, cols, row_offsets, col_indices, values)

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def density(self) -> float:
        return self.nnz / (self.rows * self.cols)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows, self.cols), dtype=np.float32)
        row_idx = np.repeat(np.arange(self.rows), np.diff(self.row_offsets))
        dense[row_idx, self.col_indices] = self.values
        return dense

    def gemv(self, x, out=None) -> np.ndarray:
        x = as_vector(x, "x")
        if x.shape[0] != self.cols:
            raise ValueError(
                f"dimension mismatch: matrix has {self.cols} columns "
                f"but vector has {x.shape[0]} elements"
            )
        if out is None:
            out = np.empty(self.rows, dtype=np.float32)
        return csr_gemv_kernel(self.row_offsets, self.col_indices,
                               self.values, x, out)
