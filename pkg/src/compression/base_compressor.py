from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)


class CompressorKind(Enum):
    IDENTITY = "identity"
    RAND_K = "rand_k"
    STOCHASTIC_ROUND = "stochastic_round"


class Encoding(Enum):
    DENSE = "dense"
    SPARSE = "sparse"
    QUANTIZED = "quantized"


@dataclass(frozen=True)
class BitAccounting:
    value_bits: int = 64
    index_bits: int = 32

    def __post_init__(self) -> None:
        if self.value_bits < 1 or self.index_bits < 0:
            raise ValueError(f"Invalid bit widths: {self}")

    def dense(self, d: int) -> int:
        return d * self.value_bits


@dataclass(frozen=True)
class CompressedMessage:
    """Wire form of Q(x), possibly batched over leading axes.

    DENSE: ``values`` is ``(..., d)``. SPARSE: ``indices``/``values`` are
    ``(..., k)`` (index, value) pairs. QUANTIZED: ``values`` holds signed integer
    levels ``(..., d)`` and ``scale`` the per-vector factor ‖x‖/s.
    """

    encoding: Encoding
    dim: int
    values: np.ndarray
    indices: np.ndarray | None = None
    scale: np.ndarray | None = None
    level_bits: int = 0

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.values.shape[:-1]

    def decode(self) -> np.ndarray:
        match self.encoding:
            case Encoding.DENSE:
                return self.values.copy()
            case Encoding.SPARSE:
                out = np.zeros(self.batch_shape + (self.dim,))
                np.put_along_axis(out, self.indices, self.values, axis=-1)
                return out
            case Encoding.QUANTIZED:
                return self.values * np.asarray(self.scale)[..., None]
        raise ValueError(f"Unknown encoding {self.encoding}")

    def nnz(self) -> np.ndarray:
        """Number of nonzero coordinates of the decoded vector."""
        return np.count_nonzero(self.decode(), axis=-1)


def encoded_bits(message: CompressedMessage, accounting: BitAccounting) -> int | np.ndarray:
    """Payload size; an int for a single vector, an int64 array for a batch."""
    match message.encoding:
        case Encoding.DENSE:
            per_row = message.dim * accounting.value_bits
        case Encoding.SPARSE:
            per_row = message.values.shape[-1] * (accounting.value_bits + accounting.index_bits)
        case Encoding.QUANTIZED:
            per_row = accounting.value_bits + message.dim * (1 + message.level_bits)
        case _:
            raise ValueError(f"Unknown encoding {message.encoding}")
    if not message.batch_shape:
        return int(per_row)
    return np.full(message.batch_shape, per_row, dtype=np.int64)


@dataclass(frozen=True)
class CompressorSpec:
    kind: CompressorKind
    k: int | None = None
    levels: int | None = None

    def __post_init__(self) -> None:
        if self.kind is CompressorKind.RAND_K and (self.k is None or self.k < 1):
            raise ValueError(f"rand_k needs k >= 1, got {self.k}")
        if self.kind is CompressorKind.STOCHASTIC_ROUND and (self.levels is None or self.levels < 1):
            raise ValueError(f"stochastic_round needs levels >= 1, got {self.levels}")


class Compressor(ABC):
    """Unbiased compression operator: E[Q(x)] = x and E‖Q(x) − x‖² ≤ ω‖x‖²."""

    kind: CompressorKind

    def __init__(self, dim: int) -> None:
        if dim < 1:
            raise ValueError(f"Dimension must be positive, got {dim}")
        self.dim = dim

    @property
    @abstractmethod
    def omega(self) -> float:
        """Variance factor ω."""

    @property
    @abstractmethod
    def zeta(self) -> float:
        """Expected number of nonzero coordinates, sup over inputs."""

    @abstractmethod
    def _encode(self, x: np.ndarray, rng: np.random.Generator) -> CompressedMessage:
        """Draw Q(x) for a batch ``(..., d)``."""

    def compress(self, x: np.ndarray, rng: np.random.Generator) -> CompressedMessage:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ValueError(f"Expected vectors of dimension {self.dim}, got shape {x.shape}")
        return self._encode(x, rng)

    def __call__(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.compress(x, rng).decode()

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim}, omega={self.omega:.4g}, zeta={self.zeta:.4g})"


def measure_omega(compressor: Compressor, x: np.ndarray, rng: np.random.Generator, draws: int = 100_000) -> float:
    """Monte-Carlo estimate of E‖Q(x) − x‖² / ‖x‖²."""
    x = np.asarray(x, dtype=np.float64)
    norm_sq = float(x @ x)
    if norm_sq == 0:
        raise ValueError("measure_omega needs a nonzero input")
    batch = np.broadcast_to(x, (draws, x.shape[-1]))
    err = compressor(batch, rng) - x
    return float(np.mean(np.sum(err**2, axis=-1))) / norm_sq
