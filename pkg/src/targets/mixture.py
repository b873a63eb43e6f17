from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from src.targets.base_problem import Problem, ProblemConstants, ProblemDescriptor, ProblemKind

logger = logging.getLogger(__name__)


class MixtureProblem(Problem):
    """Two-component Gaussian mixture π = w N(m₁, s²I) + (1−w) N(m₂, s²I) in one or two dimensions.

    Every device holds a replica of F_mix = −log π, so the device average is
    F_mix itself and the federated samplers target the mixture for any n. The
    mixture is not log-concave once the modes separate, but still satisfies LSI.
    """

    kind = ProblemKind.MIXTURE

    def __init__(
        self,
        weight: float,
        means: np.ndarray,
        variance: float,
        *,
        n: int = 1,
        mu_lsi: float | None = None,
    ) -> None:
        means = np.asarray(means, dtype=np.float64)
        if means.ndim == 1:
            means = means[:, None]
        if means.shape[0] != 2 or means.shape[1] not in (1, 2):
            raise ValueError(f"Expected two component means in 1 or 2 dimensions, got shape {means.shape}")
        if not 0 < weight < 1:
            raise ValueError(f"Mixture weight must lie in (0, 1), got {weight}")
        if variance <= 0:
            raise ValueError(f"Component variance must be positive, got {variance}")

        d = means.shape[1]
        self._means = means
        self._log_weights = np.log([weight, 1.0 - weight])
        self._variance = float(variance)
        self._weight = float(weight)
        self._d = d

        # ∇²F_mix = I/s² − r₁r₂ ΔmΔmᵀ/s⁴ with r₁r₂ ≤ ¼
        gap_sq = float(np.sum((means[0] - means[1]) ** 2))
        curvature = 1.0 / variance
        L_mix = max(curvature, abs(curvature - gap_sq / (4.0 * variance**2)))

        constants = ProblemConstants(
            L=L_mix,
            L_devices=(L_mix,) * n,
            mu_lsi=mu_lsi,
            f_star=self._potential_minimum(),
            log_normalizer=0.0 if n == 1 else None,
        )
        super().__init__(d=d, n=n, constants=constants)

    def _log_components(self, x: np.ndarray) -> np.ndarray:
        diff = x[..., None, :] - self._means  # (..., 2, d)
        maha = np.sum(diff**2, axis=-1) / self._variance
        log_norm = -0.5 * self._d * math.log(2 * math.pi * self._variance)
        return self._log_weights + log_norm - 0.5 * maha

    def _potential(self, x: np.ndarray) -> np.ndarray:
        return -logsumexp(self._log_components(x), axis=-1)

    def _potential_grad(self, x: np.ndarray) -> np.ndarray:
        resp = softmax(self._log_components(x), axis=-1)  # (..., 2)
        diff = x[..., None, :] - self._means
        return np.sum(resp[..., None] * diff, axis=-2) / self._variance

    def _potential_minimum(self) -> float:
        best = math.inf
        for start in self._means:
            result = minimize(
                lambda y: float(self._potential(y)),
                start,
                jac=lambda y: self._potential_grad(y),
                method="BFGS",
            )
            best = min(best, float(result.fun))
        return best

    @property
    def means(self) -> np.ndarray:
        return self._means

    @property
    def variance(self) -> float:
        return self._variance

    def value_device(self, i: int, x: np.ndarray) -> np.ndarray:
        self._device(i)
        return self._potential(self._point(x))

    def grad_device(self, i: int, x: np.ndarray) -> np.ndarray:
        self._device(i)
        return self._potential_grad(self._point(x))

    def target_density(self) -> Callable[[np.ndarray], np.ndarray] | None:
        return lambda points: np.exp(-self._potential(np.asarray(points, dtype=np.float64).reshape(-1, self.d)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Exact draws from the mixture, shape ``(size, d)``."""
        component = (rng.random(size) >= self._weight).astype(int)
        noise = rng.normal(scale=math.sqrt(self._variance), size=(size, self.d))
        return self._means[component] + noise

    def describe(self) -> ProblemDescriptor:
        return ProblemDescriptor(
            kind=self.kind,
            d=self.d,
            n=self.n,
            details={
                "weight": self._weight,
                "means": self._means.tolist(),
                "variance": self._variance,
            },
        )
