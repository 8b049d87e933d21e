"""Continuous channel: variational latent encoding evolved by a neural ODE.

Each event's embedding is encoded to the mean and log standard deviation
of a low-dimensional Gaussian, a latent state is drawn with the
reparameterization trick, evolved over the following inter-event
interval by a linear ODE field, and decoded back to model width.  With
block granularity below 1, consecutive events share one latent that
encodes the block-mean embedding and evolves over the block's span.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError
from .ode import ode_solve

LOG_STD_MIN = -20.0
LOG_STD_MAX = 3.0


@dataclass(frozen=True)
class NeuralEvolutionParams:
    enc_mean_w1: ad.Tensor  # (d, D)
    enc_mean_b1: ad.Tensor  # (d,)
    enc_mean_w2: ad.Tensor  # (d, d)
    enc_mean_b2: ad.Tensor  # (d,)
    enc_std_w1: ad.Tensor
    enc_std_b1: ad.Tensor
    enc_std_w2: ad.Tensor
    enc_std_b2: ad.Tensor
    ode_wz: ad.Tensor  # (d, d)
    ode_wt: ad.Tensor  # (d,)
    ode_b: ad.Tensor  # (d,)
    dec_w: ad.Tensor  # (D, d)
    dec_b: ad.Tensor  # (D,)
    latent_dim: int
    model_dim: int


def init_evolution_params(model_dim, latent_dim, rng):
    if latent_dim >= model_dim:
        raise ContractError("latent_dim must be smaller than model_dim")
    d, D = latent_dim, model_dim

    def lin(rows, cols_, scale):
        return ad.param(rng.normal((rows, cols_)) * scale)

    return NeuralEvolutionParams(
        enc_mean_w1=lin(d, D, 1.0 / np.sqrt(D)),
        enc_mean_b1=ad.param(np.zeros(d)),
        enc_mean_w2=lin(d, d, 1.0 / np.sqrt(d)),
        enc_mean_b2=ad.param(np.zeros(d)),
        enc_std_w1=lin(d, D, 1.0 / np.sqrt(D)),
        enc_std_b1=ad.param(np.zeros(d)),
        enc_std_w2=lin(d, d, 0.1 / np.sqrt(d)),
        enc_std_b2=ad.param(np.zeros(d)),
        ode_wz=lin(d, d, 0.1 / np.sqrt(d)),
        ode_wt=ad.param(np.zeros(d)),
        ode_b=ad.param(np.zeros(d)),
        dec_w=lin(D, d, 1.0 / np.sqrt(d)),
        dec_b=ad.param(np.zeros(D)),
        latent_dim=d,
        model_dim=D,
    )


@dataclass
class LatentState:
    """Per-block view of the variational quantities (vectors of length d)."""

    mean: ad.Tensor
    log_std: ad.Tensor  # clamped log standard deviation
    z0: ad.Tensor  # sampled initial state
    z1: ad.Tensor  # state evolved to the end of the block's interval


@dataclass
class ChannelOutput:
    """Everything the continuous channel produces for one sequence.

    The variational quantities are kept in matrix form ((blocks, d)
    tensors) so the loss terms stay cheap; latent_states() materializes
    the per-block vector views.
    """

    o_rows: ad.Tensor  # (L, D)
    mean: ad.Tensor
    log_std: ad.Tensor
    z0: ad.Tensor
    z1: ad.Tensor

    def latent_states(self):
        n = self.mean.shape[0]
        return [
            LatentState(
                mean=ad.rows(self.mean, k, k + 1).reshape(-1),
                log_std=ad.rows(self.log_std, k, k + 1).reshape(-1),
                z0=ad.rows(self.z0, k, k + 1).reshape(-1),
                z1=ad.rows(self.z1, k, k + 1).reshape(-1),
            )
            for k in range(n)
        ]


@dataclass(frozen=True)
class BlockPartition:
    ratio: float
    boundaries: list  # (start, stop) pairs covering 0..L

    @staticmethod
    def build(length, ratio):
        """Split 0..length into consecutive blocks of ceil(1/ratio) events."""
        if not (0.0 < ratio <= 1.0):
            raise ContractError("block ratio must lie in (0, 1]")
        size = int(np.ceil(1.0 / ratio))
        bounds = [(s, min(s + size, length)) for s in range(0, length, size)]
        return BlockPartition(ratio=ratio, boundaries=bounds)


def _ff(x, w1, b1, w2, b2):
    h = ad.tanh(x @ w1.T + b1)
    return h @ w2.T + b2


def encode(e_rows, params):
    """Mean and (unclamped) log-std rows for a (L, D) embedding tensor."""
    mean = _ff(e_rows, params.enc_mean_w1, params.enc_mean_b1, params.enc_mean_w2, params.enc_mean_b2)
    log_std = _ff(e_rows, params.enc_std_w1, params.enc_std_b1, params.enc_std_w2, params.enc_std_b2)
    return mean, log_std


def sample_z0(mean, log_std, rng=None, noise=None):
    """Reparameterized draw mean + exp(log_std) * eps with eps ~ N(0, I).

    Pass ``noise`` to fix eps explicitly (zeros give the posterior mean);
    log_std is clamped so the scale stays within [e^-20, e^3].  Returns
    (z0, clamped_log_std).
    """
    clamped = ad.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX)
    if noise is None:
        noise = rng.normal(mean.shape)
    return mean + ad.exp(clamped) * ad.Tensor(noise), clamped


def make_field(params):
    """Linear ODE field f(z, t) = z Wz^T + t wt + b, batched over rows."""
    wt_row = params.ode_wt.reshape(1, -1)
    b_row = params.ode_b.reshape(1, -1)

    def field(z, t):
        return z @ params.ode_wz.T + t * wt_row + b_row

    return field


def rk4_linear(z0, wz, wt, b, t_begin, t_end, cfg):
    """Fused RK4 integration of the linear field, one graph node.

    Identical discretisation to ode_solve(make_field(...)) but with the
    whole unrolled solve as a single op whose backward replays the steps
    in reverse; this removes hundreds of per-step graph nodes from the
    training loop.  t_begin/t_end are per-row arrays; rows with zero span
    pass through unchanged.
    """
    t0 = np.asarray(t_begin, dtype=np.float64).reshape(-1, 1)
    t1 = np.asarray(t_end, dtype=np.float64).reshape(-1, 1)
    if np.any(t1 < t0):
        raise ContractError("rk4_linear requires t_end >= t_begin")
    steps = cfg.step_count
    h = (t1 - t0) / steps

    a_mat = wz.data
    w_vec = wt.data.reshape(1, -1)
    b_vec = b.data.reshape(1, -1)

    def f(z, t):
        return z @ a_mat.T + t * w_vec + b_vec

    zs, k1s, k2s, k3s, k4s = [], [], [], [], []
    z = z0.data
    for s in range(steps):
        ta = t0 + s * h
        tb = t0 + (s + 0.5) * h
        tc = t0 + (s + 1.0) * h
        k1 = f(z, ta)
        k2 = f(z + (0.5 * h) * k1, tb)
        k3 = f(z + (0.5 * h) * k2, tb)
        k4 = f(z + h * k3, tc)
        zs.append(z)
        k1s.append(k1)
        k2s.append(k2)
        k3s.append(k3)
        k4s.append(k4)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out = z

    def bwd(g):
        gz = g
        ga = np.zeros_like(a_mat)
        gw = np.zeros_like(w_vec)
        gb = np.zeros_like(b_vec)
        for s in reversed(range(steps)):
            ta = t0 + s * h
            tb = t0 + (s + 0.5) * h
            tc = t0 + (s + 1.0) * h
            z_in, k1, k2, k3 = zs[s], k1s[s], k2s[s], k3s[s]
            gk1 = (h / 6.0) * gz
            gk2 = (h / 3.0) * gz
            gk3 = (h / 3.0) * gz
            gk4 = (h / 6.0) * gz
            gz_step = gz.copy()
            # k4 = f(z + h k3, tc)
            u4 = z_in + h * k3
            ga += gk4.T @ u4
            gw += (tc * gk4).sum(axis=0, keepdims=True)
            gb += gk4.sum(axis=0, keepdims=True)
            gu4 = gk4 @ a_mat
            gz_step += gu4
            gk3 = gk3 + h * gu4
            # k3 = f(z + h/2 k2, tb)
            u3 = z_in + (0.5 * h) * k2
            ga += gk3.T @ u3
            gw += (tb * gk3).sum(axis=0, keepdims=True)
            gb += gk3.sum(axis=0, keepdims=True)
            gu3 = gk3 @ a_mat
            gz_step += gu3
            gk2 = gk2 + (0.5 * h) * gu3
            # k2 = f(z + h/2 k1, tb)
            u2 = z_in + (0.5 * h) * k1
            ga += gk2.T @ u2
            gw += (tb * gk2).sum(axis=0, keepdims=True)
            gb += gk2.sum(axis=0, keepdims=True)
            gu2 = gk2 @ a_mat
            gz_step += gu2
            gk1 = gk1 + (0.5 * h) * gu2
            # k1 = f(z, ta)
            ga += gk1.T @ z_in
            gw += (ta * gk1).sum(axis=0, keepdims=True)
            gb += gk1.sum(axis=0, keepdims=True)
            gz_step += gk1 @ a_mat
            gz = gz_step
        if z0.requires_grad:
            z0._accum(gz)
        if wz.requires_grad:
            wz._accum(ga)
        if wt.requires_grad:
            wt._accum(gw.reshape(wt.data.shape))
        if b.requires_grad:
            b._accum(gb.reshape(b.data.shape))

    return ad._node(out, (z0, wz, wt, b), bwd, "rk4_linear")


def evolve(z0, t_start, t_end, params, solver_cfg):
    """Evolve one latent vector over [t_start, t_end]."""
    if t_end < t_start:
        raise ContractError("evolve requires t_end >= t_start")
    if t_end == t_start:
        return z0
    z = z0.reshape(1, -1) if z0.ndim == 1 else z0
    out = rk4_linear(z, params.ode_wz, params.ode_wt, params.ode_b,
                     np.full(z.shape[0], t_start), np.full(z.shape[0], t_end), solver_cfg)
    return out.reshape(-1) if z0.ndim == 1 else out


def decode(z1, params):
    """Affine map back to model width."""
    z = z1.reshape(1, -1) if z1.ndim == 1 else z1
    out = z @ params.dec_w.T + params.dec_b
    return out.reshape(-1) if z1.ndim == 1 else out


def run_channel(e_rows, times, partition, params, solver_cfg, rng=None, latent_noise=True):
    """Full channel over a sequence: encode, sample, evolve, decode.

    Returns a ChannelOutput whose o_rows is (L, D), aligned with events
    (rows within one block are identical copies of the block's decode).
    Each block's latent evolves from its first event's time to the next
    block's first event time; the last block evolves to the final event
    time, a zero-length interval when it holds a single event.  Noise is
    drawn as one (blocks, d) matrix, so a fixed rng fixes the channel.
    """
    if not partition.boundaries:
        raise ContractError("empty block partition")
    length = partition.boundaries[-1][1]
    if length != e_rows.shape[0]:
        raise ContractError("partition does not cover the sequence")

    starts = [b[0] for b in partition.boundaries]
    n_blocks = len(starts)

    if partition.ratio >= 1.0:
        enc_in = e_rows
    else:
        # block-mean embeddings; the pooling matrix is a constant
        pool = np.zeros((n_blocks, length))
        for k, (s, e) in enumerate(partition.boundaries):
            pool[k, s:e] = 1.0 / (e - s)
        enc_in = ad.Tensor(pool) @ e_rows

    mean, log_std_raw = encode(enc_in, params)
    noise = rng.normal((n_blocks, params.latent_dim)) if latent_noise else np.zeros((n_blocks, params.latent_dim))
    z0, log_std = sample_z0(mean, log_std_raw, noise=noise)

    t_begin = np.array([times[s] for s in starts])
    t_end = np.append(t_begin[1:], times[length - 1])
    z1 = rk4_linear(z0, params.ode_wz, params.ode_wt, params.ode_b, t_begin, t_end, solver_cfg)

    o_blocks = decode(z1, params)
    if partition.ratio >= 1.0:
        o_rows = o_blocks
    else:
        block_of = np.zeros(length, dtype=np.intp)
        for k, (s, e) in enumerate(partition.boundaries):
            block_of[s:e] = k
        o_rows = ad.take_rows(o_blocks, block_of)

    return ChannelOutput(o_rows=o_rows, mean=mean, log_std=log_std, z0=z0, z1=z1)
