from __future__ import annotations

import numpy as np

from src.compression.base_compressor import CompressedMessage, Compressor, CompressorKind, Encoding


class IdentityCompressor(Compressor):
    """Sends the vector uncompressed; ω = 0."""

    kind = CompressorKind.IDENTITY

    @property
    def omega(self) -> float:
        return 0.0

    @property
    def zeta(self) -> float:
        return float(self.dim)

    def _encode(self, x: np.ndarray, rng: np.random.Generator) -> CompressedMessage:
        return CompressedMessage(Encoding.DENSE, self.dim, x.copy())
