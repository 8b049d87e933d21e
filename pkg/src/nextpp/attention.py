"""Discrete channel and fusion: causal self-attention and cross-attention.

Both blocks are residual (input + attention) followed by layer
normalisation, with no position-wise feedforward sublayer.  Attention is
multi-head scaled dot-product under a strict causal mask: position i may
attend to positions <= i only, which keeps every fused row a function of
its own history.  In the cross block the continuous-channel output
supplies queries while the self-attention stream supplies keys and
values.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError


@dataclass(frozen=True)
class AttentionBlockParams:
    wq: ad.Tensor  # (D, D)
    wk: ad.Tensor
    wv: ad.Tensor
    wo: ad.Tensor
    ln_gain: ad.Tensor  # (D,)
    ln_bias: ad.Tensor  # (D,)
    head_count: int


@dataclass(frozen=True)
class AttentionParams:
    self_blocks: tuple  # one AttentionBlockParams per layer
    cross_blocks: tuple
    head_count: int
    layer_count: int


def init_attention_params(model_dim, head_count, layer_count, rng):
    if model_dim % head_count != 0:
        raise ContractError("model_dim must be divisible by head_count")
    if layer_count < 1:
        raise ContractError("layer_count must be >= 1")

    def block():
        scale = 1.0 / np.sqrt(model_dim)
        return AttentionBlockParams(
            wq=ad.param(rng.normal((model_dim, model_dim)) * scale),
            wk=ad.param(rng.normal((model_dim, model_dim)) * scale),
            wv=ad.param(rng.normal((model_dim, model_dim)) * scale),
            wo=ad.param(rng.normal((model_dim, model_dim)) * scale),
            ln_gain=ad.param(np.ones(model_dim)),
            ln_bias=ad.param(np.zeros(model_dim)),
            head_count=head_count,
        )

    return AttentionParams(
        self_blocks=tuple(block() for _ in range(layer_count)),
        cross_blocks=tuple(block() for _ in range(layer_count)),
        head_count=head_count,
        layer_count=layer_count,
    )


def _attend(query_src, kv_src, block, dropout_p=0.0, rng=None):
    """Multi-head causal attention; returns (output rows, per-head weights)."""
    dim = query_src.shape[1]
    heads = block.head_count
    hd = dim // heads
    scale = 1.0 / np.sqrt(hd)

    q = query_src @ block.wq
    k = kv_src @ block.wk
    v = kv_src @ block.wv

    outs = []
    weights = []
    for h in range(heads):
        qh = ad.cols(q, h * hd, (h + 1) * hd)
        kh = ad.cols(k, h * hd, (h + 1) * hd)
        vh = ad.cols(v, h * hd, (h + 1) * hd)
        probs = ad.causal_softmax((qh @ kh.T) * scale)
        weights.append(probs.data.copy())
        if dropout_p > 0.0:
            keep = (rng.uniform(probs.shape) >= dropout_p) / (1.0 - dropout_p)
            probs = probs * ad.Tensor(keep)
        outs.append(probs @ vh)
    merged = outs[0] if heads == 1 else ad.hstack(outs)
    return merged @ block.wo, weights


def _residual_norm(x, attn_out, block):
    return ad.layer_norm(x + attn_out) * block.ln_gain + block.ln_bias


def self_attention_block(e_rows, block, dropout_p=0.0, rng=None):
    """LayerNorm(E + CausalSelfAttention(E)); returns (A, per-head weights)."""
    attn, weights = _attend(e_rows, e_rows, block, dropout_p, rng)
    return _residual_norm(e_rows, attn, block), weights


def cross_attention_block(o_rows, a_rows, block, dropout_p=0.0, rng=None):
    """LayerNorm(O + CrossAttention(query=O, key=A, value=A)) under the causal mask."""
    if o_rows.shape[0] != a_rows.shape[0]:
        raise ContractError("query and key streams must have equal length")
    attn, weights = _attend(o_rows, a_rows, block, dropout_p, rng)
    return _residual_norm(o_rows, attn, block), weights


def export_attention(weight_maps, path):
    """Write attention weights as CSV rows layer,head,query,key,weight.

    ``weight_maps`` is a list (per layer) of lists (per head) of (L, L)
    arrays.  Masked positions are written as exact zeros; each
    (layer, head, query) group sums to 1 within 1e-9.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer,head,query,key,weight\n")
        for layer, heads in enumerate(weight_maps):
            for head, w in enumerate(heads):
                n = w.shape[0]
                for qi in range(n):
                    for ki in range(n):
                        fh.write(f"{layer},{head},{qi},{ki},{w[qi, ki]:.9g}\n")
