"""Multi-band autoregressive GRU decoder with hand-derived gradients.

One decoder invocation consumes the last ``samples_per_step`` subband
vectors (most recent first) concatenated with a conditioning vector,
runs FC1 -> GRU -> FC2 (ReLU around the GRU), and emits
``samples_per_step`` independent Gaussian heads. Each head parameterizes
a full covariance over the ``bands`` dimensions through a
lower-triangular Cholesky factor whose diagonal is squashed into
(SIGMA_MIN, SIGMA_MAX) by a scaled sigmoid, so the factor is always
valid and the variance can never blow up.

Everything is plain numpy and dtype-polymorphic: float32 for training,
float64 when the finite-difference harness wants exact gradients. The
backward pass is written out by hand; no autodiff anywhere.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "SIGMA_MIN",
    "SIGMA_MAX",
    "SAMPLE_CLIP",
    "PRUNED_MATRICES",
    "param_names",
    "init_params",
    "gru_cell",
    "decoder_step",
    "build_chol",
    "gaussian_nll",
    "sample_head",
    "forward_heads",
    "forward_window",
    "backward_window",
    "mean_nll",
]

SIGMA_MIN = 1e-4
SIGMA_MAX = 1.0
SAMPLE_CLIP = 1.0
LOG_2PI = math.log(2.0 * math.pi)

PRUNED_MATRICES = (
    "fc1", "gru_wr", "gru_wz", "gru_wc", "gru_ur", "gru_uz", "gru_uc", "fc2",
)


def param_names(samples_per_step: int) -> list[str]:
    """Canonical parameter ordering used by checkpoints and flattening."""
    names = [
        "fc1", "fc1_bias",
        "gru_wr", "gru_wz", "gru_wc",
        "gru_ur", "gru_uz", "gru_uc",
        "gru_r_bias", "gru_z_bias", "gru_c_bias",
        "fc2", "fc2_bias",
    ]
    for m in range(samples_per_step):
        names += [f"head{m}_mu", f"head{m}_mu_bias",
                  f"head{m}_cov", f"head{m}_cov_bias"]
    return names


def init_params(rng: np.random.Generator, hidden: int, bands: int,
                samples_per_step: int, cond_dim: int) -> dict[str, np.ndarray]:
    """Scaled-normal initialization; covariance heads start near sigma=0.5."""
    h, b, m, c = hidden, bands, samples_per_step, cond_dim
    d_in = m * b + c
    p_tri = b * (b + 1) // 2

    def mat(rows, cols, scale):
        return (rng.standard_normal((rows, cols)) * scale).astype(np.float32)

    params: dict[str, np.ndarray] = {}
    params["fc1"] = mat(h, d_in, 1.0 / math.sqrt(d_in))
    params["fc1_bias"] = np.zeros(h, np.float32)
    for gate in ("r", "z", "c"):
        params[f"gru_w{gate}"] = mat(h, h, 1.0 / math.sqrt(h))
        params[f"gru_u{gate}"] = mat(h, h, 1.0 / math.sqrt(h))
        params[f"gru_{gate}_bias"] = np.zeros(h, np.float32)
    params["fc2"] = mat(h, h, 1.0 / math.sqrt(h))
    params["fc2_bias"] = np.zeros(h, np.float32)
    for i in range(m):
        params[f"head{i}_mu"] = mat(b, h, 1.0 / math.sqrt(h))
        params[f"head{i}_mu_bias"] = np.zeros(b, np.float32)
        params[f"head{i}_cov"] = mat(p_tri, h, 0.1 / math.sqrt(h))
        params[f"head{i}_cov_bias"] = np.zeros(p_tri, np.float32)
    return params


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_cell(x, h, wr, wz, wc, ur, uz, uc, br, bz, bc):
    """One GRU update; works on single vectors or batched leading dims.

    r = sigmoid(Wr x + Ur h + br), z likewise, candidate
    c = tanh(Wc x + Uc (r*h) + bc), new state (1-z)*h + z*c.
    """
    x = np.asarray(x)
    h = np.asarray(h)
    if x.shape[-1] != wr.shape[1]:
        raise ValueError(
            f"dimension mismatch: gate matrices expect {wr.shape[1]} inputs "
            f"but x has {x.shape[-1]} elements"
        )
    if h.shape[-1] != ur.shape[1]:
        raise ValueError(
            f"dimension mismatch: recurrent matrices expect {ur.shape[1]} "
            f"state elements but h has {h.shape[-1]}"
        )
    r = _sigmoid(x @ wr.T + h @ ur.T + br)
    z = _sigmoid(x @ wz.T + h @ uz.T + bz)
    c = np.tanh(x @ wc.T + (r * h) @ uc.T + bc)
    return (1.0 - z) * h + z * c


def _tril_indices(bands: int):
    return np.tril_indices(bands)


def build_chol(raw, bands: int):
    """Lower-triangular factor from packed row-major lower-tri raw values.

    Diagonal entries pass through SIGMA_MIN + (SIGMA_MAX - SIGMA_MIN) *
    sigmoid(raw), so they always land strictly inside the variance
    guards. Returns (L, sigmoid_cache) with the cache needed by the
    backward pass.
    """
    raw = np.asarray(raw)
    ti, tj = _tril_indices(bands)
    out_shape = raw.shape[:-1] + (bands, bands)
    chol = np.zeros(out_shape, dtype=raw.dtype)
    chol[..., ti, tj] = raw
    dix = np.arange(bands)
    sig = _sigmoid(chol[..., dix, dix])
    chol[..., dix, dix] = SIGMA_MIN + (SIGMA_MAX - SIGMA_MIN) * sig
    return chol, sig


def _solve_lower(chol, rhs):
    """Forward substitution over the trailing dimension, batched."""
    bands = chol.shape[-1]
    v = np.empty_like(rhs)
    for k in range(bands):
        acc = rhs[..., k].copy()
        for j in range(k):
            acc -= chol[..., k, j] * v[..., j]
        v[..., k] = acc / chol[..., k, k]
    return v


def _solve_lower_t(chol, rhs):
    """Back substitution with the transposed factor, batched."""
    bands = chol.shape[-1]
    u = np.empty_like(rhs)
    for k in range(bands - 1, -1, -1):
        acc = rhs[..., k].copy()
        for j in range(k + 1, bands):
            acc -= chol[..., j, k] * u[..., j]
        u[..., k] = acc / chol[..., k, k]
    return u


def gaussian_nll(x, mu, chol) -> float:
    """Negative log density of x under N(mu, L L^T), L = chol.

    Computed as 0.5*||L^{-1}(x-mu)||^2 + sum(log diag L) + B/2 log 2pi.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    chol = np.asarray(chol, dtype=np.float64)
    bands = x.shape[-1]
    if chol.shape[-2:] != (bands, bands):
        raise ValueError(
            f"chol must be {bands}x{bands} to match x, got {chol.shape[-2:]}"
        )
    if np.any(np.triu(chol, k=1) != 0):
        raise ValueError("chol must be lower triangular")
    dix = np.arange(bands)
    diag = chol[..., dix, dix]
    if np.any(diag <= 0):
        raise ValueError("chol diagonal must be strictly positive")
    v = _solve_lower(chol, x - mu)
    val = 0.5 * (v * v).sum(-1) + np.log(diag).sum(-1) + 0.5 * bands * LOG_2PI
    return float(val) if val.ndim == 0 else val


def sample_head(mu, chol, eps, clip: float = SAMPLE_CLIP) -> np.ndarray:
    """Reparameterized sample clamp(mu + L eps, +-clip).

    The factor's diagonal is clamped into [SIGMA_MIN, SIGMA_MAX] first;
    factors built by `build_chol` already satisfy that, so the clamp is
    a no-op for them.
    """
    mu = np.asarray(mu)
    chol = np.asarray(chol).copy()
    eps = np.asarray(eps)
    bands = mu.shape[-1]
    dix = np.arange(bands)
    chol[..., dix, dix] = np.clip(chol[..., dix, dix], SIGMA_MIN, SIGMA_MAX)
    sample = mu + np.einsum("...ij,...j->...i", chol, eps)
    return np.clip(sample, -clip, clip)


def _nll_batch(target, mu, chol, sig, want_grads: bool):
    """Batched NLL over trailing band dim; optionally mu/raw gradients."""
    bands = target.shape[-1]
    dix = np.arange(bands)
    diag = chol[..., dix, dix]
    v = _solve_lower(chol, target - mu)
    nll = 0.5 * (v * v).sum(-1) + np.log(diag).sum(-1) + 0.5 * bands * LOG_2PI
    if not want_grads:
        return nll, None, None
    u = _solve_lower_t(chol, v)
    dmu = -u
    dchol = -u[..., :, None] * v[..., None, :]
    dchol[..., dix, dix] += 1.0 / diag
    ti, tj = _tril_indices(bands)
    draw = dchol[..., ti, tj]
    diag_pos = np.nonzero(ti == tj)[0]
    dsig = (SIGMA_MAX - SIGMA_MIN) * sig * (1.0 - sig)
    draw[..., diag_pos] *= dsig
    return nll, dmu, draw


def decoder_step(params: dict, prev, cond, h):
    """Single decoder invocation: returns (mus, chols, new hidden state).

    prev is the flattened last samples_per_step subband vectors, most
    recent first; mus has shape (samples_per_step, bands) and chols
    (samples_per_step, bands, bands).
    """
    prev = np.asarray(prev).ravel()
    cond = np.asarray(cond).ravel()
    h = np.asarray(h)
    d_in = params["fc1"].shape[1]
    if prev.shape[0] + cond.shape[0] != d_in:
        raise ValueError(
            f"dimension mismatch: fc1 expects {d_in} inputs but got "
            f"{prev.shape[0]} previous samples + {cond.shape[0]} cond values"
        )
    x = np.concatenate([prev.astype(h.dtype), cond.astype(h.dtype)])
    a = np.maximum(params["fc1"] @ x + params["fc1_bias"], 0)
    h_new = gru_cell(
        a, h,
        params["gru_wr"], params["gru_wz"], params["gru_wc"],
        params["gru_ur"], params["gru_uz"], params["gru_uc"],
        params["gru_r_bias"], params["gru_z_bias"], params["gru_c_bias"],
    )
    o = np.maximum(params["fc2"] @ h_new + params["fc2_bias"], 0)
    n_heads = sum(1 for k in params if k.startswith("head")
                  and k.endswith("_mu"))
    bands = params["head0_mu"].shape[0]
    mus = np.empty((n_heads, bands), dtype=o.dtype)
    chols = np.empty((n_heads, bands, bands), dtype=o.dtype)
    for m in range(n_heads):
        mus[m] = params[f"head{m}_mu"] @ o + params[f"head{m}_mu_bias"]
        raw = params[f"head{m}_cov"] @ o + params[f"head{m}_cov_bias"]
        chols[m], _ = build_chol(raw, bands)
    return mus, chols, h_new


def _forward(params: dict, inp, target, want_grads: bool):
    n_b, n_t, _ = inp.shape
    if target is None:
        n_m = sum(1 for k in params
                  if k.startswith("head") and k.endswith("_mu"))
        bands = params["head0_mu"].shape[0]
    else:
        n_m, bands = target.shape[2], target.shape[3]
    dtype = inp.dtype

    pre1 = inp @ params["fc1"].T + params["fc1_bias"]
    act = np.maximum(pre1, 0)

    xr = act @ params["gru_wr"].T
    xz = act @ params["gru_wz"].T
    xc = act @ params["gru_wc"].T

    hidden = params["fc2"].shape[1]
    h = np.zeros((n_b, hidden), dtype=dtype)
    hs = np.empty((n_b, n_t, hidden), dtype=dtype)
    hprevs = np.empty_like(hs)
    rs = np.empty_like(hs)
    zs = np.empty_like(hs)
    cs = np.empty_like(hs)
    for t in range(n_t):
        hp = h
        r = _sigmoid(xr[:, t] + hp @ params["gru_ur"].T
                     + params["gru_r_bias"])
        z = _sigmoid(xz[:, t] + hp @ params["gru_uz"].T
                     + params["gru_z_bias"])
        c = np.tanh(xc[:, t] + (r * hp) @ params["gru_uc"].T
                    + params["gru_c_bias"])
        h = (1.0 - z) * hp + z * c
        hprevs[:, t] = hp
        rs[:, t] = r
        zs[:, t] = z
        cs[:, t] = c
        hs[:, t] = h

    pre2 = hs @ params["fc2"].T + params["fc2_bias"]
    out = np.maximum(pre2, 0)

    p_tri = bands * (bands + 1) // 2
    mu = np.empty((n_b, n_t, n_m, bands), dtype=dtype)
    raw = np.empty((n_b, n_t, n_m, p_tri), dtype=dtype)
    for m in range(n_m):
        mu[:, :, m] = out @ params[f"head{m}_mu"].T \
            + params[f"head{m}_mu_bias"]
        raw[:, :, m] = out @ params[f"head{m}_cov"].T \
            + params[f"head{m}_cov_bias"]
    chol, sig = build_chol(raw, bands)
    if target is None:
        return mu, chol
    nll, dmu, draw = _nll_batch(target, mu, chol, sig, want_grads)
    if not want_grads:
        return float(nll.mean()), None

    cache = dict(inp=inp, pre1=pre1, act=act, hprevs=hprevs, rs=rs, zs=zs,
                 cs=cs, hs=hs, pre2=pre2, out=out, dmu=dmu, draw=draw,
                 n_m=n_m)
    return float(nll.mean()), cache


def forward_heads(params: dict, inp):
    """Teacher-forced head outputs for every step of a window.

    inp: (N, T, D_in). Returns (mu, chol) with shapes (N, T, M, B) and
    (N, T, M, B, B).
    """
    return _forward(params, inp, None, want_grads=False)


def forward_window(params: dict, inp, target):
    """Teacher-forced forward over a (batch, time, ...) window.

    inp: (N, T, D_in) decoder inputs; target: (N, T, M, B) samples the
    M heads must explain. Returns (mean NLL, cache for backward).
    """
    return _forward(params, inp, target, want_grads=True)


def backward_window(params: dict, cache) -> dict[str, np.ndarray]:
    """Gradients of the mean NLL from `forward_window` for every param."""
    inp = cache["inp"]
    n_b, n_t, _ = inp.shape
    n_m = cache["n_m"]
    scale = 1.0 / (n_b * n_t * n_m)
    dmu = cache["dmu"] * scale
    draw = cache["draw"] * scale
    out = cache["out"]
    hs = cache["hs"]
    act = cache["act"]

    grads: dict[str, np.ndarray] = {}
    hidden = hs.shape[-1]
    d_out = np.zeros((n_b, n_t, hidden), dtype=inp.dtype)
    flat_out = out.reshape(-1, hidden)
    for m in range(n_m):
        dmu_m = dmu[:, :, m]
        draw_m = draw[:, :, m]
        d_out += dmu_m @ params[f"head{m}_mu"] \
            + draw_m @ params[f"head{m}_cov"]
        grads[f"head{m}_mu"] = dmu_m.reshape(-1, dmu_m.shape[-1]).T @ flat_out
        grads[f"head{m}_mu_bias"] = dmu_m.sum(axis=(0, 1))
        grads[f"head{m}_cov"] = draw_m.reshape(-1, draw_m.shape[-1]).T \
            @ flat_out
        grads[f"head{m}_cov_bias"] = draw_m.sum(axis=(0, 1))

    dpre2 = d_out * (cache["pre2"] > 0)
    grads["fc2"] = dpre2.reshape(-1, hidden).T @ hs.reshape(-1, hidden)
    grads["fc2_bias"] = dpre2.sum(axis=(0, 1))
    dhs = dpre2 @ params["fc2"]

    rs, zs, cs, hprevs = cache["rs"], cache["zs"], cache["cs"], cache["hprevs"]
    drpre = np.empty_like(rs)
    dzpre = np.empty_like(zs)
    dcpre = np.empty_like(cs)
    dur = np.zeros_like(params["gru_ur"], dtype=inp.dtype)
    duz = np.zeros_like(dur)
    duc = np.zeros_like(dur)
    dh = np.zeros((n_b, hidden), dtype=inp.dtype)
    for t in range(n_t - 1, -1, -1):
        dh = dh + dhs[:, t]
        r, z, c, hp = rs[:, t], zs[:, t], cs[:, t], hprevs[:, t]
        dz = dh * (c - hp)
        dc = dh * z
        dhp = dh * (1.0 - z)
        dcp = dc * (1.0 - c * c)
        drh = dcp @ params["gru_uc"]
        dr = drh * hp
        dhp = dhp + drh * r
        dzp = dz * z * (1.0 - z)
        dhp = dhp + dzp @ params["gru_uz"]
        drp = dr * r * (1.0 - r)
        dhp = dhp + drp @ params["gru_ur"]
        duc += dcp.T @ (r * hp)
        duz += dzp.T @ hp
        dur += drp.T @ hp
        drpre[:, t] = drp
        dzpre[:, t] = dzp
        dcpre[:, t] = dcp
        dh = dhp

    grads["gru_ur"], grads["gru_uz"], grads["gru_uc"] = dur, duz, duc
    flat_act = act.reshape(-1, hidden)
    grads["gru_wr"] = drpre.reshape(-1, hidden).T @ flat_act
    grads["gru_wz"] = dzpre.reshape(-1, hidden).T @ flat_act
    grads["gru_wc"] = dcpre.reshape(-1, hidden).T @ flat_act
    grads["gru_r_bias"] = drpre.sum(axis=(0, 1))
    grads["gru_z_bias"] = dzpre.sum(axis=(0, 1))
    grads["gru_c_bias"] = dcpre.sum(axis=(0, 1))

    dact = drpre @ params["gru_wr"] + dzpre @ params["gru_wz"] \
        + dcpre @ params["gru_wc"]
    dpre1 = dact * (cache["pre1"] > 0)
    d_in = inp.shape[-1]
    grads["fc1"] = dpre1.reshape(-1, hidden).T @ inp.reshape(-1, d_in)
    grads["fc1_bias"] = dpre1.sum(axis=(0, 1))
    return grads


def mean_nll(params: dict, inp, target) -> float:
    """Teacher-forced mean NLL per (step, head) without gradient caches."""
    return _forward(params, inp, target, want_grads=False)[0]
