"""Synthetic multi-band signal task for the toy decoder.

Each sequence is a pair of damped stochastic oscillators (second-order
autoregressions), one per band. The per-band resonance frequency and
amplitude are drawn per sequence from a latent vector and exposed only
through a fixed random tanh encoding in the conditioning vector; the
oscillation phase is exposed only through the signal history. Predicting
the next samples therefore requires combining the conditioning vector
(which pins the recursion coefficients) with the previous samples (which
pin the phase) — a model that loses its conditioning inputs degrades
toward the marginal signal distribution and its NLL rises sharply.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SignalTaskConfig",
    "make_dataset",
    "build_decoder_inputs",
    "global_gaussian_nll",
]


@dataclass(frozen=True)
class SignalTaskConfig:
    """Shape and dynamics of the synthetic two-band dataset."""

    bands: int = 2
    cond_dim: int = 28
    seq_len: int = 256
    n_train: int = 768
    n_val: int = 96
    damping: float = 0.93
    omega_ranges: tuple = ((0.25, 0.95), (1.2, 2.4))
    amp_range: tuple = (0.45, 0.8)
    burn_in: int = 200
    task_seed: int = 7

    def __post_init__(self):
        if len(self.omega_ranges) != self.bands:
            raise ValueError(
                f"omega_ranges must have one (lo, hi) pair per band, got "
                f"{len(self.omega_ranges)} for {self.bands} bands"
            )
        if not 0.0 < self.damping < 1.0:
            raise ValueError(f"damping must be in (0, 1), got {self.damping}")


_N_FEATURES = 6  # per-band omega + per-band amp + 2 distractor latents


def _stationary_std(phi1: float, phi2: float) -> float:
    """Marginal standard deviation of x_t = phi1 x_{t-1} + phi2 x_{t-2} + e."""
    var = (1.0 - phi2) / ((1.0 + phi2) * ((1.0 - phi2) ** 2 - phi1 ** 2))
    return float(np.sqrt(var))


def _encoder_maps(cfg: SignalTaskConfig):
    """Fixed random conditioning encoder shared by every dataset draw."""
    rng = np.random.default_rng(cfg.task_seed)
    n_feat = 2 * cfg.bands + 2
    proj = rng.standard_normal((cfg.cond_dim, n_feat)) * 0.8
    bias = rng.standard_normal(cfg.cond_dim) * 0.3
    mix_omega = rng.standard_normal((cfg.bands, 2))
    mix_amp = rng.standard_normal((cfg.bands, 2))
    return proj, bias, mix_omega, mix_amp


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def make_dataset(cfg: SignalTaskConfig, seed: int) -> dict:
    """Generate train/val splits; cond is constant per sequence."""
    proj, bias, mix_omega, mix_amp = _encoder_maps(cfg)
    rng = np.random.default_rng(seed)

    def draw(n_seq):
        targets = np.empty((n_seq, cfg.seq_len, cfg.bands), np.float32)
        cond = np.empty((n_seq, cfg.cond_dim), np.float32)
        omegas = np.empty((n_seq, cfg.bands))
        amps = np.empty((n_seq, cfg.bands))
        a_lo, a_hi = cfg.amp_range
        for i in range(n_seq):
            latent = rng.uniform(-1.0, 1.0, size=4)
            distract = rng.uniform(-1.0, 1.0, size=2)
            feats = np.empty(_N_FEATURES)
            for b in range(cfg.bands):
                lo, hi = cfg.omega_ranges[b]
                fo = float(np.tanh(mix_omega[b] @ latent[:2]))
                fa = float(np.tanh(mix_amp[b] @ latent[2:4]))
                omegas[i, b] = lo + (hi - lo) * 0.5 * (fo + 1.0)
                amps[i, b] = a_lo + (a_hi - a_lo) * 0.5 * (fa + 1.0)
            feats[0:cfg.bands] = np.tanh(mix_omega @ latent[:2])
            feats[cfg.bands:2 * cfg.bands] = np.tanh(mix_amp @ latent[2:4])
            feats[2 * cfg.bands:] = distract
            cond[i] = np.tanh(proj @ feats + bias).astype(np.float32)

            total = cfg.burn_in + cfg.seq_len
            for b in range(cfg.bands):
                phi1 = 2.0 * cfg.damping * np.cos(omegas[i, b])
                phi2 = -cfg.damping ** 2
                sigma_e = amps[i, b] / _stationary_std(phi1, phi2)
                e = rng.standard_normal(total) * sigma_e
                x = np.zeros(total)
                for t in range(2, total):
                    x[t] = phi1 * x[t - 1] + phi2 * x[t - 2] + e[t]
                targets[i, :, b] = x[cfg.burn_in:].astype(np.float32)
        return targets, cond, omegas, amps

    train_targets, train_cond, train_omega, train_amp = draw(cfg.n_train)
    val_targets, val_cond, val_omega, val_amp = draw(cfg.n_val)
    return {
        "train_targets": train_targets,
        "train_cond": train_cond,
        "val_targets": val_targets,
        "val_cond": val_cond,
        "meta": {
            "config": cfg,
            "seed": seed,
            "train_omega": train_omega,
            "train_amp": train_amp,
            "val_omega": val_omega,
            "val_amp": val_amp,
        },
    }


def build_decoder_inputs(targets, cond, samples_per_step: int):
    """Teacher-forced decoder inputs and per-invocation targets.

    targets: (n_seq, T, bands); cond: (n_seq, cond_dim). Returns
    inp (n_seq, T//M, M*bands + cond_dim) with the previous M subband
    vectors most-recent-first (zeros before the sequence start), and
    tgt (n_seq, T//M, M, bands).
    """
    targets = np.asarray(targets, dtype=np.float32)
    cond = np.asarray(cond, dtype=np.float32)
    n_seq, t_sub, bands = targets.shape
    m = samples_per_step
    t_inv = t_sub // m
    used = targets[:, :t_inv * m]
    tgt = used.reshape(n_seq, t_inv, m, bands)

    padded = np.concatenate(
        [np.zeros((n_seq, m, bands), np.float32), used], axis=1)
    prev = np.empty((n_seq, t_inv, m, bands), np.float32)
    for j in range(1, m + 1):
        idx = np.arange(t_inv) * m + (m - j)
        prev[:, :, j - 1] = padded[:, idx]
    inp = np.concatenate(
        [prev.reshape(n_seq, t_inv, m * bands),
         np.broadcast_to(cond[:, None, :], (n_seq, t_inv, cond.shape[1]))],
        axis=2)
    return np.ascontiguousarray(inp), np.ascontiguousarray(tgt)


def global_gaussian_nll(train_targets, val_targets) -> float:
    """Mean NLL of val samples under one Gaussian fitted to train samples.

    The weakest sensible predictor: a single multivariate normal over the
    band vector, ignoring history and conditioning entirely.
    """
    train = np.asarray(train_targets, dtype=np.float64).reshape(-1,
                                                                train_targets.shape[-1])
    val = np.asarray(val_targets, dtype=np.float64).reshape(-1,
                                                            val_targets.shape[-1])
    mu = train.mean(axis=0)
    cov = np.cov(train.T, bias=False)
    cov = np.atleast_2d(cov)
    bands = train.shape[1]
    chol = np.linalg.cholesky(cov)
    resid = val - mu
    v = np.linalg.solve(chol, resid.T).T
    nll = 0.5 * (v * v).sum(axis=1) + np.log(np.diag(chol)).sum() \
        + 0.5 * bands * np.log(2.0 * np.pi)
    return float(nll.mean())
