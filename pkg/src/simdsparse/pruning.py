"""Gradual group-magnitude pruning with a cubic sparsity ramp.

Sparsity rises from 0 to ``1 - target_density`` over a ramp window: zero
before ``ramp_start``, then ``(1 - d) * (1 - (1 - t)^3)`` with
``t = (step - ramp_start) / ramp_length``, then flat. Masks zero whole
width-``group_size`` row segments (the same granularity the block-sparse
kernels and the block group penalty use), are recomputed from current
weight magnitudes every ``recompute_interval`` steps while the ramp is
active, and are frozen once the ramp ends. Masked weights are re-zeroed
every step so optimizer updates cannot resurrect them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import as_matrix, check_group_width, check_mask_shape

__all__ = [
    "PruneSchedule",
    "compute_group_mask",
    "apply_mask",
    "group_norms",
    "ScheduledPruner",
]


@dataclass(frozen=True)
class PruneSchedule:
    """Cubic ramp from dense to ``target_density`` kept weights."""

    target_density: float = 0.3
    ramp_start: int = 2_000_000
    ramp_length: int = 2_500_000
    recompute_interval: int = 100

    def __post_init__(self):
        if not 0.0 < self.target_density <= 1.0:
            raise ValueError(
                f"target_density must be in (0, 1], got {self.target_density}"
            )
        if self.ramp_start < 0:
            raise ValueError(f"ramp_start must be >= 0, got {self.ramp_start}")
        if self.ramp_length < 1:
            raise ValueError(f"ramp_length must be >= 1, got {self.ramp_length}")
        if self.recompute_interval < 1:
            raise ValueError(
                f"recompute_interval must be >= 1, got {self.recompute_interval}"
            )

    @property
    def ramp_end(self) -> int:
        return self.ramp_start + self.ramp_length

    def sparsity_at_step(self, step: int) -> float:
        """Target fraction of pruned groups at an optimizer step."""
        if step <= self.ramp_start:
            return 0.0
        if step >= self.ramp_end:
            return 1.0 - self.target_density
        frac = (step - self.ramp_start) / self.ramp_length
        return (1.0 - self.target_density) * (1.0 - (1.0 - frac) ** 3)


def group_norms(w, group_size: int) -> np.ndarray:
    """L2 norm of each contiguous width-`group_size` row segment, float64."""
    w = as_matrix(w, "w")
    rows, cols = w.shape
    check_group_width(cols, group_size)
    t = w.astype(np.float64).reshape(rows, cols // group_size, group_size)
    return np.sqrt((t * t).sum(axis=2))


def compute_group_mask(w, group_size: int, sparsity: float) -> np.ndarray:
    """Group-constant keep mask zeroing the smallest-norm groups.

    Exactly ``floor(sparsity * n_groups)`` groups are dropped. Ties on the
    norm are broken toward the lower (row, group) position so the result
    is deterministic.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must be in [0, 1], got {sparsity}")
    w = as_matrix(w, "w")
    rows, cols = w.shape
    check_group_width(cols, group_size)
    norms = group_norms(w, group_size)
    n_groups = norms.size
    k = int(math.floor(sparsity * n_groups))
    bits = np.ones(n_groups, dtype=np.uint8)
    if k > 0:
        order = np.argsort(norms.ravel(), kind="stable")
        bits[order[:k]] = 0
    return np.repeat(bits.reshape(rows, cols // group_size), group_size, axis=1)


def apply_mask(w, mask) -> np.ndarray:
    """Elementwise product of weights and a 0/1 mask, dtype preserved."""
    w = np.asarray(w)
    mask = np.asarray(mask)
    check_mask_shape(w, mask)
    return (w * mask).astype(w.dtype, copy=False)


class ScheduledPruner:
    """Drives masks for a named set of matrices along a PruneSchedule.

    ``step`` recomputes masks when the schedule says to (always at the
    exact ramp end, so the final sparsity is hit even for intervals that
    do not divide the ramp length) and re-applies the current masks to
    the weights in place every call.
    """

    def __init__(self, schedule: PruneSchedule, group_size: int, enabled: bool = True):
        self.schedule = schedule
        self.group_size = int(group_size)
        self.enabled = bool(enabled)
        self.masks: dict[str, np.ndarray] = {}

    def _ensure_masks(self, weights: dict[str, np.ndarray]) -> None:
        for name, w in weights.items():
            if name not in self.masks:
                check_group_width(w.shape[1], self.group_size)
                self.masks[name] = np.ones(w.shape, dtype=np.uint8)

    def step(self, weights: dict[str, np.ndarray], step: int) -> None:
        """Advance to `step`: maybe recompute masks, then re-zero weights."""
        self._ensure_masks(weights)
        sched = self.schedule
        if (
            self.enabled
            and sched.ramp_start < step <= sched.ramp_end
            and (step % sched.recompute_interval == 0 or step == sched.ramp_end)
        ):
            target = sched.sparsity_at_step(step)
            for name, w in weights.items():
                self.masks[name] = compute_group_mask(w, self.group_size, target)
        for name, w in weights.items():
            np.multiply(w, self.masks[name], out=w)

    def current_sparsity(self) -> float:
        """Fraction of masked-out entries across all managed matrices."""
        if not self.masks:
            return 0.0
        zero = sum(int((m == 0).sum()) for m in self.masks.values())
        total = sum(m.size for m in self.masks.values())
        return zero / total
