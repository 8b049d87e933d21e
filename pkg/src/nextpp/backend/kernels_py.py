"""Pure-numpy reference kernels.

These are the fallback implementations of the fused numeric kernels that
dominate the training loop (positive activation of the intensity, causal
attention softmax, layer normalisation).  The compiled twin in
``_kernels.pyx`` must match these bit-for-bit in semantics; parity is
enforced by tests/test_backend.py.

All kernels take C-contiguous float64 arrays and return new arrays; they
never mutate their inputs.
"""

import numpy as np

NAME = "python"

LAYERNORM_EPS = 1e-8


def _softplus(u):
    # log(1 + e^u) without overflow for large |u|
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def scaled_softplus_fwd(x, gamma):
    """gamma * log(1 + exp(x / gamma)), elementwise; gamma pre-broadcast to x."""
    return gamma * _softplus(x / gamma)


def scaled_softplus_bwd(x, gamma, gout):
    """Gradients of scaled_softplus_fwd w.r.t. x and gamma."""
    u = x / gamma
    s = _sigmoid(u)
    gx = gout * s
    ggamma = gout * (_softplus(u) - u * s)
    return gx, ggamma


_TRIL_CACHE = {}


def _tril_mask(n):
    mask = _TRIL_CACHE.get(n)
    if mask is None:
        mask = np.tril(np.ones((n, n), dtype=bool))
        _TRIL_CACHE[n] = mask
    return mask


def causal_softmax_fwd(scores):
    """Row-wise softmax of a square score matrix under a strict causal mask.

    Row i is normalised over columns 0..i; columns > i get exactly 0.
    """
    masked = np.where(_tril_mask(scores.shape[0]), scores, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - m)
    return e / e.sum(axis=1, keepdims=True)


def causal_softmax_bwd(probs, gout):
    """Backward of causal_softmax_fwd; masked positions receive zero gradient."""
    dot = np.sum(probs * gout, axis=1, keepdims=True)
    return probs * (gout - dot)


def layernorm_fwd(x):
    """Row-wise normalisation (zero mean, unit variance); returns (y, rstd)."""
    mean = x.mean(axis=1, keepdims=True)
    var = np.mean((x - mean) ** 2, axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    return (x - mean) * rstd, rstd


def layernorm_bwd(y, rstd, gout):
    """Backward of layernorm_fwd through mean, variance and scaling."""
    gm = gout.mean(axis=1, keepdims=True)
    gym = np.mean(gout * y, axis=1, keepdims=True)
    return rstd * (gout - gm - y * gym)
