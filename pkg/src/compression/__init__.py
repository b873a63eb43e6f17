from src.compression.base_compressor import (
    BitAccounting,
    CompressedMessage,
    Compressor,
    CompressorKind,
    CompressorSpec,
    Encoding,
    encoded_bits,
    measure_omega,
)
from src.compression.identity import IdentityCompressor
from src.compression.rand_k import RandKCompressor
from src.compression.stochastic_round import StochasticRoundCompressor


def build_compressor(spec: CompressorSpec, d: int) -> Compressor:
    match spec.kind:
        case CompressorKind.IDENTITY:
            return IdentityCompressor(d)
        case CompressorKind.RAND_K:
            return RandKCompressor(d, spec.k)
        case CompressorKind.STOCHASTIC_ROUND:
            return StochasticRoundCompressor(d, spec.levels)
    raise ValueError(f"Unknown compressor kind: {spec.kind}")


def omega_of(spec: CompressorSpec, d: int) -> float:
    return build_compressor(spec, d).omega


def zeta_of(spec: CompressorSpec, d: int) -> float:
    return build_compressor(spec, d).zeta


__all__ = [
    "BitAccounting",
    "CompressedMessage",
    "Compressor",
    "CompressorKind",
    "CompressorSpec",
    "Encoding",
    "IdentityCompressor",
    "RandKCompressor",
    "StochasticRoundCompressor",
    "build_compressor",
    "encoded_bits",
    "measure_omega",
    "omega_of",
    "zeta_of",
]
