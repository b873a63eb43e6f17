from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from src.metrics.gaussian import GaussianSummary
from src.streams import Purpose, StreamFactory

logger = logging.getLogger(__name__)


class ProblemKind(Enum):
    QUADRATIC = "quadratic"
    MIXTURE = "mixture"
    LOGISTIC = "logistic"
    STREAMING = "streaming"


class DimensionError(ValueError):
    """A point does not live in the problem's R^d."""


class ProblemKindError(TypeError):
    """An oracle was requested that this kind of problem does not provide."""


class MissingConstantError(ValueError):
    """A constant needed by a formula was not declared for the problem."""


@dataclass(frozen=True)
class ProblemConstants:
    """Declared constants.

    ``L``, ``mu_pl``, ``mu_lsi`` and ``f_star`` describe the device-average
    objective ``F/n`` that the federated algorithms descend and sample from.
    ``log_normalizer`` is ``log ∫ exp(-F)`` for the summed objective.
    """

    L: float
    L_devices: tuple[float, ...]
    L_samples: tuple[float, ...] | None = None
    sigma: tuple[float, ...] | None = None
    mu_pl: float | None = None
    mu_lsi: float | None = None
    f_star: float | None = None
    log_normalizer: float | None = None

    def __post_init__(self) -> None:
        declared = [self.L, *self.L_devices, *(self.L_samples or ()), *(self.sigma or ())]
        declared += [c for c in (self.mu_pl, self.mu_lsi) if c is not None]
        if any(c < 0 or not np.isfinite(c) for c in declared):
            raise ValueError(f"Declared constants must be finite and nonnegative: {self}")
        mean_device = sum(self.L_devices) / len(self.L_devices)
        if self.L > mean_device * (1 + 1e-9) + 1e-12:
            raise ValueError(f"L={self.L} exceeds the mean device smoothness {mean_device}")

    def require(self, name: str) -> float:
        value = getattr(self, name)
        if value is None:
            raise MissingConstantError(f"Problem does not declare '{name}'")
        return value


@dataclass(frozen=True)
class ProblemDescriptor:
    kind: ProblemKind
    d: int
    n: int
    samples_per_device: int | None = None
    details: dict[str, object] = field(default_factory=dict)


class Problem(ABC):
    """Objective ``F = Σ_i F_i`` spread over ``n`` devices.

    Every oracle accepts points with arbitrary leading batch axes, shape
    ``(..., d)``, and is pure: randomness only enters through an explicit
    generator.
    """

    kind: ProblemKind

    def __init__(self, d: int, n: int, constants: ProblemConstants) -> None:
        if d < 1 or n < 1:
            raise ValueError(f"Need d >= 1 and n >= 1, got d={d}, n={n}")
        if len(constants.L_devices) != n:
            raise ValueError(f"Expected {n} device smoothness constants, got {len(constants.L_devices)}")
        self.d = d
        self.n = n
        self.constants = constants

    # ── checks ──────────────────────────────────────────────────────

    def _point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise DimensionError(f"Expected points of dimension {self.d}, got shape {x.shape}")
        return x

    def _device(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(f"Device index {i} out of range [0, {self.n})")
        return i

    # ── device oracles ──────────────────────────────────────────────

    @abstractmethod
    def value_device(self, i: int, x: np.ndarray) -> np.ndarray:
        """F_i(x)."""

    @abstractmethod
    def grad_device(self, i: int, x: np.ndarray) -> np.ndarray:
        """∇F_i(x)."""

    # ── aggregate oracles ───────────────────────────────────────────

    def value(self, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        return np.sum(np.stack([self.value_device(i, x) for i in range(self.n)]), axis=0)

    def grad_full(self, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        return np.sum(np.stack([self.grad_device(i, x) for i in range(self.n)]), axis=0)

    def mean_value(self, x: np.ndarray) -> np.ndarray:
        return self.value(x) / self.n

    def grad_mean(self, x: np.ndarray) -> np.ndarray:
        return self.grad_full(x) / self.n

    def expected_mean_value(
        self,
        law: GaussianSummary,
        rng: np.random.Generator | None = None,
        draws: int = 50_000,
    ) -> float:
        """E_{x∼law}[F̄(x)], by Monte Carlo unless a subclass knows it in closed form."""
        if law.dim != self.d:
            raise DimensionError(f"Law of dimension {law.dim} for a problem of dimension {self.d}")
        rng = rng if rng is not None else StreamFactory(0)(Purpose.INIT)
        xs = rng.multivariate_normal(law.mean, law.full, size=draws)
        return float(np.mean(self.mean_value(xs)))

    # ── finite-sum / streaming oracles ──────────────────────────────

    @property
    def samples_per_device(self) -> int | None:
        return None

    def grad_samples(self, i: int, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Per-sample gradients ∇F_ij(x) for an index array; shape ``idx.shape + (d,)``."""
        raise ProblemKindError(f"{self.kind.value} problems are not finite sums")

    def grad_sample(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        self._device(i)
        N = self.samples_per_device
        if N is None:
            raise ProblemKindError(f"{self.kind.value} problems are not finite sums")
        if not 0 <= j < N:
            raise IndexError(f"Sample index {j} out of range [0, {N})")
        idx = np.full(x.shape[:-1] + (1,), j)
        return self.grad_samples(i, idx, x)[..., 0, :]

    def sample_stream(self, i: int, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        raise ProblemKindError(f"{self.kind.value} problems have no data stream")

    def grad_at_sample(self, i: int, xi: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise ProblemKindError(f"{self.kind.value} problems have no data stream")

    def grad_stream(self, i: int, rng: np.random.Generator, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        xi = self.sample_stream(self._device(i), rng, x.shape[:-1])
        return self.grad_at_sample(i, xi, x)

    # ── densities ───────────────────────────────────────────────────

    def log_density_unnormalized(self, x: np.ndarray) -> np.ndarray:
        return -self.value(x)

    def log_normalizer(self) -> float | None:
        return self.constants.log_normalizer

    def target_gaussian(self) -> GaussianSummary | None:
        """Gaussian law of exp(-F/n), when the target is Gaussian."""
        return None

    def target_density(self) -> Callable[[np.ndarray], np.ndarray] | None:
        """Normalised density of exp(-F/n) over points ``(m, d)``, when known."""
        return None

    @abstractmethod
    def describe(self) -> ProblemDescriptor:
        """Summary echoed into run headers."""

    def __repr__(self) -> str:
        return f"{type(self).__name__}(d={self.d}, n={self.n})"


def check_gradient(
    problem: Problem,
    x: np.ndarray,
    *,
    device: int | None = None,
    step: float = 1e-4,
) -> float:
    """Relative error between the gradient oracle and central differences of the value."""
    x = np.asarray(x, dtype=np.float64)
    value = problem.value if device is None else (lambda y: problem.value_device(device, y))
    grad = problem.grad_full(x) if device is None else problem.grad_device(device, x)
    basis = np.eye(problem.d) * step
    numeric = np.array([(value(x + e) - value(x - e)) / (2 * step) for e in basis])
    scale = max(float(np.linalg.norm(grad)), 1.0)
    return float(np.linalg.norm(numeric - grad) / scale)


def estimate_smoothness(
    problem: Problem,
    device: int,
    rng: np.random.Generator,
    *,
    pairs: int = 1000,
    radius: float = 3.0,
) -> float:
    """Largest observed ‖∇F_i(x) − ∇F_i(y)‖ / ‖x − y‖ over random pairs."""
    x = rng.normal(scale=radius, size=(pairs, problem.d))
    y = x + rng.normal(size=(pairs, problem.d))
    num = np.linalg.norm(problem.grad_device(device, x) - problem.grad_device(device, y), axis=-1)
    den = np.linalg.norm(x - y, axis=-1)
    ratio = float(np.max(num / den))
    logger.debug("Observed smoothness of device %d: %.6g", device, ratio)
    return ratio
