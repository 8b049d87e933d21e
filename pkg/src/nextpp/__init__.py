"""NEXTPP: dual-channel marked temporal point process.

Event sequences are encoded twice, by causal self-attention over mark
plus time embeddings and by a variational latent state evolved with a
neural ODE across inter-event intervals; cross-attention fuses the two
streams into the representation that drives a Hawkes-style conditional
intensity.  Training maximises sequence likelihood with KL and latent
continuity regularizers; generation uses per-mark thinning.
"""

from .errors import NextppError
from .events import Dataset, EventSequence, load_jsonl, save_jsonl
from .model import ModelConfig, NextppModel
from .rng import Rng
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EventSequence",
    "ModelConfig",
    "NextppError",
    "NextppModel",
    "Rng",
    "TrainConfig",
    "load_jsonl",
    "save_jsonl",
    "train",
    "__version__",
]
