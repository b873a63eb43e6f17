from __future__ import annotations

import logging
import math

import numpy as np

from src.compression.base_compressor import CompressedMessage, Compressor, CompressorKind, Encoding

logger = logging.getLogger(__name__)


class StochasticRoundCompressor(Compressor):
    """Unbiased dithering of x/‖x‖ onto ``levels`` uniform levels; the norm is sent exactly.

    Each coordinate becomes ‖x‖·sign(x_j)·l_j/s with l_j ∈ {⌊s|u_j|⌋, ⌈s|u_j|⌉}
    drawn so that E[l_j] = s|u_j|. Conditionally on the direction u the variance
    is ‖x‖²·Σ_j f_j(1 − f_j)/s², f_j the fractional part of s|u_j|. Its supremum
    over directions is bounded by min(d/s², √d/s), which is the declared ω.
    """

    kind = CompressorKind.STOCHASTIC_ROUND

    def __init__(self, dim: int, levels: int) -> None:
        super().__init__(dim)
        if levels < 1:
            raise ValueError(f"stochastic_round needs levels >= 1, got {levels}")
        self.levels = levels
        self.level_bits = max(1, math.ceil(math.log2(levels + 1)))
        self._omega = min(dim / levels**2, math.sqrt(dim) / levels)
        logger.debug("stochastic_round d=%d s=%d: omega=%.6g", dim, levels, self._omega)

    def relative_variance(self, x: np.ndarray) -> np.ndarray:
        """E‖Q(x) − x‖² / ‖x‖², exact for each nonzero x in ``(..., d)``."""
        u = np.abs(x) / np.linalg.norm(x, axis=-1, keepdims=True)
        frac = self.levels * u - np.floor(self.levels * u)
        return np.sum(frac * (1.0 - frac), axis=-1) / self.levels**2

    @property
    def omega(self) -> float:
        return self._omega

    @property
    def zeta(self) -> float:
        s = self.levels
        return float(min(self.dim, s * (s + math.sqrt(self.dim))))

    def _encode(self, x: np.ndarray, rng: np.random.Generator) -> CompressedMessage:
        norm = np.linalg.norm(x, axis=-1)
        safe = np.where(norm > 0, norm, 1.0)
        scaled = self.levels * np.abs(x) / safe[..., None]
        lower = np.floor(scaled)
        levels = lower + (rng.random(x.shape) < scaled - lower)
        signed = (np.sign(x) * levels).astype(np.int64)
        return CompressedMessage(
            Encoding.QUANTIZED,
            self.dim,
            signed,
            scale=norm / self.levels,
            level_bits=self.level_bits,
        )
