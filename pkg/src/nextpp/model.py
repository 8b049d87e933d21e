"""The NEXTPP model: dual-channel encoder fused into a conditional intensity.

Forward pass per sequence: embed events, run the causal self-attention
stack (discrete channel) and the variational neural-ODE channel in
parallel, then fuse them layer by layer with cross-attention where the
continuous output queries the discrete stream.  The fused row C_i
conditions the intensity after event i; a learned row c0 conditions the
stretch before the first event.

Ablations: ``disable_neural_evolution`` drops the continuous channel and
uses the self-attention stream as the fused representation (no KL or
continuity terms); ``disable_cross_attention`` keeps both channels but
skips the fusion, using the decoded ODE output directly.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import attention as attn
from . import autodiff as ad
from . import embedding as emb
from . import evolution as evo
from . import intensity as inten
from .errors import ContractError
from .ode import OdeSolverConfig
from .rng import Rng


@dataclass(frozen=True)
class ModelConfig:
    mark_count: int
    model_dim: int = 16
    latent_dim: int = 8
    layer_count: int = 2
    head_count: int = 2
    step_count: int = 8
    block_ratio: float = 1.0
    dropout: float = 0.1
    disable_neural_evolution: bool = False
    disable_cross_attention: bool = False

    def solver(self):
        return OdeSolverConfig(step_count=self.step_count)


@dataclass
class ForwardPass:
    """Outputs of one sequence forward: fused rows plus channel internals."""

    c_rows: ad.Tensor  # (L, D) fused representation
    a_rows: ad.Tensor  # (L, D) discrete stream (None when CA-ablated path skips it)
    channel: "evo.ChannelOutput"  # None when NE is disabled
    self_weights: list  # per layer -> per head -> (L, L)
    cross_weights: list

    def cond_rows(self, c0):
        """(L+1, D) conditioning matrix: row i conditions the interval after
        event i, with row 0 the learned pre-first-event representation."""
        n = self.c_rows.shape[0]
        return ad.vstack([c0.reshape(1, -1), ad.rows(self.c_rows, 0, n - 1)]) if n > 1 else c0.reshape(1, -1)


class NextppModel:
    def __init__(self, config, seed=0, empirical_rates=None):
        if config.mark_count < 1:
            raise ContractError("mark_count must be >= 1")
        self.config = config
        rng = Rng(seed)
        self.embedding = emb.init_embedding_params(config.mark_count, config.model_dim, rng)
        self.evolution = evo.init_evolution_params(config.model_dim, config.latent_dim, rng)
        self.attention = attn.init_attention_params(config.model_dim, config.head_count, config.layer_count, rng)
        self.intensity = inten.init_intensity_params(config.mark_count, config.model_dim, rng, empirical_rates)
        self.c0 = ad.param(rng.normal((config.model_dim,)) * 0.1)

    # -- parameter bookkeeping ------------------------------------------

    def parameters(self):
        """Flat name -> leaf-Tensor map of every learnable quantity."""
        out = {"embedding.mark_matrix": self.embedding.mark_matrix, "c0": self.c0}
        for name in (
            "enc_mean_w1", "enc_mean_b1", "enc_mean_w2", "enc_mean_b2",
            "enc_std_w1", "enc_std_b1", "enc_std_w2", "enc_std_b2",
            "ode_wz", "ode_wt", "ode_b", "dec_w", "dec_b",
        ):
            out[f"evolution.{name}"] = getattr(self.evolution, name)
        for kind, blocks in (("self", self.attention.self_blocks), ("cross", self.attention.cross_blocks)):
            for layer, block in enumerate(blocks):
                for name in ("wq", "wk", "wv", "wo", "ln_gain", "ln_bias"):
                    out[f"attention.{kind}{layer}.{name}"] = getattr(block, name)
        for name in ("decay", "readout", "bias", "base", "gamma_raw"):
            out[f"intensity.{name}"] = getattr(self.intensity, name)
        return out

    def load_state(self, arrays):
        """Overwrite parameter values from a name -> array map (shape-checked)."""
        params = self.parameters()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise ContractError(f"parameter names mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
        for name, p in params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ContractError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def state_arrays(self):
        return {name: p.data.copy() for name, p in self.parameters().items()}

    # -- forward ----------------------------------------------------------

    def forward(self, seq, rng=None, training=False, latent_noise=None):
        """Run the dual-channel encoder over one sequence.

        ``training`` enables attention dropout and (by default) latent
        noise; evaluation uses the posterior mean and no dropout so it is
        deterministic.  ``latent_noise`` overrides the default when set.
        """
        cfg = self.config
        if latent_noise is None:
            latent_noise = training
        if (training and cfg.dropout > 0.0 or latent_noise) and rng is None:
            raise ContractError("forward in stochastic mode needs an rng")
        dropout_p = cfg.dropout if training else 0.0

        e_rows = emb.embed_sequence(seq, self.embedding)
        length = len(seq)

        channel = None
        if not cfg.disable_neural_evolution:
            partition = evo.BlockPartition.build(length, cfg.block_ratio)
            channel = evo.run_channel(
                e_rows, seq.times, partition, self.evolution, cfg.solver(),
                rng=rng, latent_noise=latent_noise,
            )

        self_weights = []
        cross_weights = []

        if cfg.disable_neural_evolution:
            a_rows = e_rows
            for block in self.attention.self_blocks:
                a_rows, w = attn.self_attention_block(a_rows, block, dropout_p, rng)
                self_weights.append(w)
            return ForwardPass(a_rows, a_rows, None, self_weights, cross_weights)

        if cfg.disable_cross_attention:
            return ForwardPass(channel.o_rows, None, channel, self_weights, cross_weights)

        a_rows = e_rows
        c_rows = channel.o_rows
        for self_block, cross_block in zip(self.attention.self_blocks, self.attention.cross_blocks):
            a_rows, w_self = attn.self_attention_block(a_rows, self_block, dropout_p, rng)
            self_weights.append(w_self)
            c_rows, w_cross = attn.cross_attention_block(c_rows, a_rows, cross_block, dropout_p, rng)
            cross_weights.append(w_cross)
        return ForwardPass(c_rows, a_rows, channel, self_weights, cross_weights)

    # -- graph-free conditioning for sampling and prediction --------------

    def weights(self):
        return inten.IntensityWeights.from_params(self.intensity)

    def cond_state(self, times, marks):
        """Conditioning state after a (possibly empty) prefix of events.

        Returns (t_last, rep) where rep is the fused row of the last
        event, or the learned initial row for an empty prefix.  Uses the
        deterministic evaluation path (posterior mean, no dropout).
        """
        if len(times) == 0:
            return 0.0, self.c0.data.copy()
        from .events import EventSequence

        seq = EventSequence.make(times, marks, self.config.mark_count)
        with ad.no_grad():
            fwd = self.forward(seq, training=False)
        return float(times[-1]), fwd.c_rows.data[-1].copy()
