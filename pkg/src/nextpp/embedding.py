"""Event embedding: learned mark vectors plus trigonometric time encoding.

Each event maps to mark_matrix[m] + temporal_encoding(t).  The time
encoding is deterministic and carries no parameters; only the mark
matrix receives gradients.  Component l (1-based) of the encoding is
cos(t / 10000^((l-1)/D)) for odd l and sin(t / 10000^(l/D)) for even l.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError


@dataclass(frozen=True)
class EmbeddingParams:
    mark_matrix: ad.Tensor  # (M, D), learnable
    model_dim: int

    def __post_init__(self):
        if self.model_dim < 2 or self.model_dim % 2 != 0:
            raise ContractError("model_dim must be even and >= 2")


def init_embedding_params(mark_count, model_dim, rng):
    # std 1/sqrt(D) keeps initial rows comparable to the unit-amplitude time encoding
    m = rng.normal((mark_count, model_dim)) / np.sqrt(model_dim)
    return EmbeddingParams(mark_matrix=ad.param(m), model_dim=model_dim)


def _divisors(dim):
    l = np.arange(1, dim + 1, dtype=np.float64)
    expo = np.where(l % 2 == 1, (l - 1) / dim, l / dim)
    return np.power(10000.0, expo)


def temporal_encoding(t, dim):
    """Encoding vector for one timestamp (plain numpy, no gradients)."""
    if dim % 2 != 0:
        raise ContractError("encoding dimension must be even")
    phase = float(t) / _divisors(dim)
    out = np.empty(dim)
    out[0::2] = np.cos(phase[0::2])
    out[1::2] = np.sin(phase[1::2])
    return out


def temporal_encoding_rows(times, dim):
    """(L, D) encoding matrix for a vector of timestamps."""
    phase = np.asarray(times, dtype=np.float64)[:, None] / _divisors(dim)[None, :]
    out = np.empty_like(phase)
    out[:, 0::2] = np.cos(phase[:, 0::2])
    out[:, 1::2] = np.sin(phase[:, 1::2])
    return out


def embed_sequence(seq, params):
    """(L, D) embedding tensor: mark row lookup plus time encoding per event."""
    if np.any(seq.marks >= params.mark_matrix.shape[0]):
        raise ContractError("mark id outside the embedding table")
    enc = ad.Tensor(temporal_encoding_rows(seq.times, params.model_dim))
    return ad.take_rows(params.mark_matrix, seq.marks) + enc
