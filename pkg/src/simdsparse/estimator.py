"""scikit-learn style estimator wrapping the sparse decoder training loop."""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import build_decoder_inputs
from .inference import generate
from .model import forward_heads
from .trainer import TrainConfig, evaluate_nll, train

__all__ = ["SparseGRUDecoder"]


class SparseGRUDecoder(BaseEstimator):
    """Subband GRU decoder trained with group regularization and pruning.

    Constructor arguments mirror `TrainConfig` one to one; `fit` consumes a
    dataset dict from `make_dataset` (keys train_targets, train_cond,
    val_targets, val_cond). Fitted state lives in trailing-underscore
    attributes: params_, masks_, trace_, val_nll_, val_nll_pre_prune_.
    """

    def __init__(self, bands=2, samples_per_step=2, cond_dim=28, hidden=128,
                 group_size=16, regularizer="group_block", reg_lambda=1e-4,
                 prune=True, target_density=0.3, ramp_start=8000,
                 ramp_length=8000, recompute_interval=100, steps=20000,
                 batch_size=4, window=12, learning_rate=1e-4, beta1=0.9,
                 beta2=0.999, adam_eps=1e-8, trace_interval=100, seed=0):
        self.bands = bands
        self.samples_per_step = samples_per_step
        self.cond_dim = cond_dim
        self.hidden = hidden
        self.group_size = group_size
        self.regularizer = regularizer
        self.reg_lambda = reg_lambda
        self.prune = prune
        self.target_density = target_density
        self.ramp_start = ramp_start
        self.ramp_length = ramp_length
        self.recompute_interval = recompute_interval
        self.steps = steps
        self.batch_size = batch_size
        self.window = window
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.trace_interval = trace_interval
        self.seed = seed

    def _config(self) -> TrainConfig:
        kwargs = {f.name: getattr(self, f.name)
                  for f in dataclasses.fields(TrainConfig)}
        return TrainConfig(**kwargs)

    def fit(self, X, y=None):
        """Train on a dataset dict; returns self."""
        result = train(self._config(), X)
        self.params_ = result.params
        self.masks_ = result.masks
        self.trace_ = result.trace
        self.val_nll_ = result.val_nll
        self.val_nll_pre_prune_ = result.val_nll_pre_prune
        self.n_steps_ = result.steps
        return self

    def nll(self, targets, cond) -> float:
        """Mean teacher-forced NLL on (n, T, B) targets with (n, C) cond."""
        check_is_fitted(self, "params_")
        return evaluate_nll(self.params_, targets, cond,
                            self.samples_per_step)

    def score(self, X, y=None) -> float:
        """Negative validation NLL of a dataset dict (higher is better)."""
        check_is_fitted(self, "params_")
        return -self.nll(X["val_targets"], X["val_cond"])

    def predict(self, X):
        """Teacher-forced head means for (targets, cond): (n, T', M, B)."""
        check_is_fitted(self, "params_")
        targets, cond = X
        inp, _ = build_decoder_inputs(targets, cond, self.samples_per_step)
        mu, _ = forward_heads(self.params_, inp)
        return mu

    def generate(self, cond, n_invocations: int, seed: int = 0,
                 path: str = "dense"):
        """Autoregressive sampling from one conditioning vector."""
        check_is_fitted(self, "params_")
        return generate(self.params_, cond, n_invocations, seed=seed,
                        path=path, masks=self.masks_,
                        group_size=self.group_size)
