from __future__ import annotations

import numpy as np

from src.compression.base_compressor import CompressedMessage, Compressor, CompressorKind, Encoding


class RandKCompressor(Compressor):
    """Keeps a uniformly random k-subset of coordinates, scaled by d/k.

    Coordinates are drawn without replacement, which gives ω = d/k − 1 exactly.
    With k = d every coordinate is kept, so the message goes out dense.
    """

    kind = CompressorKind.RAND_K

    def __init__(self, dim: int, k: int) -> None:
        super().__init__(dim)
        if not 1 <= k <= dim:
            raise ValueError(f"rand_k needs 1 <= k <= d, got k={k}, d={dim}")
        self.k = k

    @property
    def omega(self) -> float:
        return self.dim / self.k - 1.0

    @property
    def zeta(self) -> float:
        return float(self.k)

    def _encode(self, x: np.ndarray, rng: np.random.Generator) -> CompressedMessage:
        if self.k == self.dim:
            return CompressedMessage(Encoding.DENSE, self.dim, x.copy())
        keys = rng.random(x.shape)
        idx = np.sort(np.argpartition(keys, self.k - 1, axis=-1)[..., : self.k], axis=-1)
        values = np.take_along_axis(x, idx, axis=-1) * (self.dim / self.k)
        return CompressedMessage(Encoding.SPARSE, self.dim, values, indices=idx)
