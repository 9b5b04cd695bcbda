"""Teacher-forced truncated-BPTT training with pruning and regularization.

Each optimizer step samples a batch of fixed-length windows, runs the
hand-written forward/backward pass, adds the penalty (sub)gradient on
the prunable matrices, applies one Adam update, and then lets the
pruning controller refresh and re-apply its masks. Gradients at masked
positions are zeroed before the update so dead weights do not
accumulate optimizer momentum. All of it is single-threaded and
deterministic for a given seed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .data import SignalTaskConfig, build_decoder_inputs
from .model import (
    PRUNED_MATRICES,
    backward_window,
    forward_window,
    init_params,
    mean_nll,
)
from .pruning import PruneSchedule, ScheduledPruner
from .regularizers import combined_objective, regularizer_from_name

__all__ = ["TrainConfig", "TrainResult", "TrainingDiverged", "train",
           "evaluate_nll"]


DIVERGENCE_LIMIT = 1e8


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite (or explodes)."""

    def __init__(self, step: int, value: float):
        super().__init__(f"training diverged at step {step}: loss = {value}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the dataset itself."""

    bands: int = 2
    samples_per_step: int = 2
    cond_dim: int = 28
    hidden: int = 128
    group_size: int = 16
    regularizer: str = "group_block"
    reg_lambda: float = 1e-4
    prune: bool = True
    target_density: float = 0.3
    ramp_start: int = 8000
    ramp_length: int = 8000
    recompute_interval: int = 100
    steps: int = 20000
    batch_size: int = 4
    window: int = 12
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    trace_interval: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.reg_lambda < 0:
            raise ValueError(f"reg_lambda must be >= 0, got {self.reg_lambda}")
        if self.bands < 1 or self.samples_per_step < 1:
            raise ValueError("bands and samples_per_step must be >= 1")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.hidden % self.group_size != 0:
            raise ValueError(
                f"hidden size {self.hidden} must be divisible by group size "
                f"{self.group_size}"
            )
        if (self.samples_per_step * self.bands + self.cond_dim) \
                % self.group_size != 0:
            raise ValueError(
                "decoder input width (samples_per_step*bands + cond_dim) "
                f"= {self.samples_per_step * self.bands + self.cond_dim} "
                f"must be divisible by group size {self.group_size}"
            )

    @property
    def schedule(self) -> PruneSchedule:
        return PruneSchedule(self.target_density, self.ramp_start,
                             self.ramp_length, self.recompute_interval)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    masks: dict[str, np.ndarray]
    trace: list[dict]
    val_nll: float
    val_nll_pre_prune: float | None
    steps: int
    config: TrainConfig


def evaluate_nll(params: dict, targets, cond, samples_per_step: int) -> float:
    """Teacher-forced mean NLL over whole sequences."""
    inp, tgt = build_decoder_inputs(targets, cond, samples_per_step)
    return mean_nll(params, inp, tgt)


def _adam_update(params, grads, state, lr, beta1, beta2, eps, t):
    corr1 = 1.0 - beta1 ** t
    corr2 = 1.0 - beta2 ** t
    for name, w in params.items():
        g = grads[name]
        m, v = state[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        w -= (lr / corr1) * m / (np.sqrt(v / corr2) + eps)


def train(config: TrainConfig, dataset: dict) -> TrainResult:
    """Run the full training loop on a dataset from `make_dataset`."""
    train_targets = dataset["train_targets"]
    train_cond = dataset["train_cond"]
    val_targets = dataset["val_targets"]
    val_cond = dataset["val_cond"]
    if train_targets.shape[-1] != config.bands:
        raise ValueError(
            f"dataset has {train_targets.shape[-1]} bands but config "
            f"says {config.bands}"
        )
    if train_cond.shape[-1] != config.cond_dim:
        raise ValueError(
            f"dataset cond dim {train_cond.shape[-1]} does not match "
            f"config cond_dim {config.cond_dim}"
        )

    inp, tgt = build_decoder_inputs(train_targets, train_cond,
                                    config.samples_per_step)
    n_seq, t_inv = inp.shape[0], inp.shape[1]
    if config.window > t_inv:
        raise ValueError(
            f"window {config.window} exceeds the {t_inv} decoder steps "
            "available per sequence"
        )

    rng = np.random.default_rng(config.seed)
    params = init_params(rng, config.hidden, config.bands,
                         config.samples_per_step, config.cond_dim)
    reg = regularizer_from_name(config.regularizer, config.group_size)
    pruner = ScheduledPruner(config.schedule, config.group_size,
                             enabled=config.prune)
    pruned_view = {name: params[name] for name in PRUNED_MATRICES}
    adam_state = {name: (np.zeros_like(w), np.zeros_like(w))
                  for name, w in params.items()}
    lam = config.reg_lambda

    trace: list[dict] = []
    val_pre: float | None = None
    window_idx = np.arange(config.window)

    with threadpool_limits(limits=1):
        pruner.step(pruned_view, 0)
        if config.prune and config.ramp_start == 0:
            val_pre = evaluate_nll(params, val_targets, val_cond,
                                   config.samples_per_step)
        for step in range(1, config.steps + 1):
            seqs = rng.integers(0, n_seq, size=config.batch_size)
            starts = rng.integers(0, t_inv - config.window + 1,
                                  size=config.batch_size)
            w_inp = inp[seqs[:, None], starts[:, None] + window_idx]
            w_tgt = tgt[seqs[:, None], starts[:, None] + window_idx]

            nll, cache = forward_window(params, w_inp, w_tgt)
            grads = backward_window(params, cache)

            reg_value = 0.0
            if reg is not None and lam > 0:
                for name in PRUNED_MATRICES:
                    value, grad = reg.value_and_grad(params[name])
                    reg_value += value
                    grads[name] += lam * grad
            total = combined_objective(nll, reg_value, lam)
            if not np.isfinite(total) or abs(total) > DIVERGENCE_LIMIT:
                raise TrainingDiverged(step, total)

            for name in PRUNED_MATRICES:
                grads[name] *= pruner.masks[name]

            _adam_update(params, grads, adam_state, config.learning_rate,
                         config.beta1, config.beta2, config.adam_eps, step)
            pruner.step(pruned_view, step)

            if step == 1 or step % config.trace_interval == 0 \
                    or step == config.steps:
                trace.append({
                    "step": step,
                    "nll": float(nll),
                    "reg": float(reg_value),
                    "total": float(total),
                    "sparsity": pruner.current_sparsity(),
                })
            if config.prune and step == config.ramp_start:
                val_pre = evaluate_nll(params, val_targets, val_cond,
                                       config.samples_per_step)

        val_nll = evaluate_nll(params, val_targets, val_cond,
                               config.samples_per_step)

    masks = dict(pruner.masks) if config.prune else {}
    return TrainResult(params=params, masks=masks, trace=trace,
                       val_nll=val_nll, val_nll_pre_prune=val_pre,
                       steps=config.steps, config=config)
