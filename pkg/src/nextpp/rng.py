"""Seeded random number generation.

One :class:`Rng` instance owns a PCG64 stream; identical seed plus
identical call sequence reproduces identical outputs bit-for-bit, which
is what makes training traces and sampled sequences reproducible.
"""

import numpy as np

from .errors import ContractError


class Rng:
    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape=None):
        if shape is None:
            return float(self._gen.standard_normal())
        return self._gen.standard_normal(shape)

    def uniform(self, shape=None):
        """Draws from [0, 1)."""
        if shape is None:
            return float(self._gen.random())
        return self._gen.random(shape)

    def exponential(self, rate):
        """Single draw from Exp(rate); mean 1/rate."""
        if rate <= 0:
            raise ContractError(f"exponential rate must be > 0, got {rate}")
        return float(self._gen.exponential(1.0 / rate))

    def integers(self, low, high=None, shape=None):
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def spawn(self):
        """Child generator with an independent stream, derived deterministically."""
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child._gen = np.random.Generator(self._gen.bit_generator.spawn(1)[0])
        return child
