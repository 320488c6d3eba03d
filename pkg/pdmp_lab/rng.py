"""
Reproducible random streams
Counter-based Philox generators keyed by (seed, stream path)
"""

from typing import Tuple

import numpy as np


class RngStream:
    """
    One independent random stream

    The stream is identified by the global seed and a path of stream ids
    (e.g. trajectory k of run r). Identical (seed, path) reproduce identical
    draws whatever thread consumes them; distinct paths are independent.
    """

    def __init__(self, seed: int, stream_id: int = 0, parent: Tuple[int, ...] = ()):
        """
        Initialize stream

        Args:
            seed: Global 64-bit seed
            stream_id: Id of this stream under its parent
            parent: Path of ancestor stream ids
        """
        if seed is None:
            raise ValueError("an explicit seed is required")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self.parent = tuple(parent)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.Philox(sequence))

    @property
    def key(self) -> Tuple[int, ...]:
        return self.parent + (self.stream_id,)

    @property
    def counter(self) -> int:
        """Current Philox block counter (advances with every 4 x 64-bit block drawn)"""
        words = self.gen.bit_generator.state['state']['counter']
        return int(sum(int(w) << (64 * k) for k, w in enumerate(words)))

    def child(self, stream_id: int) -> 'RngStream':
        """Independent sub-stream; does not consume draws from this stream"""
        return RngStream(self.seed, stream_id, self.key)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key}, counter={self.counter})"
