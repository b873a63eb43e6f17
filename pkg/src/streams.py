"""Counter-based random streams keyed by (seed, purpose, party, iteration).

Every random draw in a run comes from its own Philox generator, so results do
not depend on the order in which devices, chains or sweep points execute.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

SERVER = 0


class Purpose(IntEnum):
    INIT = 1
    COIN = 2
    COMPRESS = 3
    MINIBATCH = 4
    REFRESH = 5
    NOISE = 6
    SWEEP = 7
    CHECK = 8
    INSTANCE = 9


def device_party(i: int) -> int:
    """Party id of device ``i`` (0-based); the server is party 0."""
    return i + 1


class StreamFactory:
    """Derives independent generators from a master seed."""

    __slots__ = ("seed",)

    def __init__(self, seed: int) -> None:
        if seed < 0:
            raise ValueError(f"Seed must be nonnegative, got {seed}")
        self.seed = int(seed)

    def __call__(self, purpose: Purpose, party: int = SERVER, iteration: int = 0) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(int(purpose), int(party), int(iteration)))
        return np.random.Generator(np.random.Philox(sequence))

    def derive_seed(self, purpose: Purpose, index: int) -> int:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(int(purpose), int(index)))
        return int(sequence.generate_state(1, dtype=np.uint32)[0])

    def __repr__(self) -> str:
        return f"StreamFactory(seed={self.seed})"
