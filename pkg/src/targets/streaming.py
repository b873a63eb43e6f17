from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from src.targets.base_problem import ProblemDescriptor, ProblemKind, ProblemKindError
from src.targets.quadratic import QuadraticProblem, random_quadratic_arrays

logger = logging.getLogger(__name__)


class StreamingProblem(QuadraticProblem):
    """Online objective F_i(x) = E_ξ[F_ξ(x)] with ∇F_ξ(x) = A_i x − b_i + ξ.

    ξ ~ N(0, σ_i²/d · I), so E‖∇F_ξ(x) − ∇F_i(x)‖² = σ_i² exactly. Every F_ξ has
    the smoothness of F_i.
    """

    kind = ProblemKind.STREAMING

    def __init__(self, A: np.ndarray, b: np.ndarray, sigma: np.ndarray | float) -> None:
        A = np.asarray(A, dtype=np.float64)
        if A.ndim == 3:
            A = A[:, None]
            b = np.asarray(b, dtype=np.float64)[:, None]
        if A.shape[1] != 1:
            raise ValueError("Streaming problems carry one quadratic per device")
        super().__init__(A, b)
        sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (self.n,))
        if np.any(sigma < 0):
            raise ValueError(f"Noise levels must be nonnegative, got {sigma}")
        self._sigma = sigma.copy()
        self.constants = replace(self.constants, sigma=tuple(float(s) for s in sigma))

    @property
    def samples_per_device(self) -> int | None:
        return None

    def grad_samples(self, i: int, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise ProblemKindError("streaming problems are not finite sums; draw from the stream instead")

    def sample_stream(self, i: int, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        scale = self._sigma[self._device(i)] / math.sqrt(self.d)
        return rng.normal(scale=scale, size=tuple(shape) + (self.d,))

    def grad_at_sample(self, i: int, xi: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.grad_device(i, x) + xi

    def describe(self) -> ProblemDescriptor:
        return ProblemDescriptor(
            kind=self.kind,
            d=self.d,
            n=self.n,
            details={"sigma": [float(s) for s in self._sigma]},
        )


def make_streaming(
    n: int,
    d: int,
    rng: np.random.Generator,
    *,
    sigma: float | list[float] = 1.0,
    eigen_range: tuple[float, float] = (0.5, 2.0),
    diagonal: bool = True,
    shift_scale: float = 1.0,
) -> StreamingProblem:
    A, b = random_quadratic_arrays(n, d, rng, eigen_range=eigen_range, diagonal=diagonal, shift_scale=shift_scale)
    problem = StreamingProblem(A, b, np.asarray(sigma, dtype=np.float64))
    logger.info("Built streaming problem n=%d d=%d sigma=%s", n, d, problem.constants.sigma)
    return problem
