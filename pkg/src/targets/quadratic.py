from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.stats import multivariate_normal, ortho_group

from src.metrics.gaussian import GaussianSummary
from src.targets.base_problem import DimensionError, Problem, ProblemConstants, ProblemDescriptor, ProblemKind

logger = logging.getLogger(__name__)


class QuadraticProblem(Problem):
    """F_i(x) = ½ xᵀA_i x − b_iᵀx, each device holding the mean of N sample quadratics.

    ``A`` has shape ``(n, N, d, d)`` and ``b`` shape ``(n, N, d)``; sample ``j`` of
    device ``i`` is F_ij(x) = ½ xᵀA_ij x − b_ijᵀx and F_i = (1/N) Σ_j F_ij.
    """

    kind = ProblemKind.QUADRATIC

    def __init__(self, A: np.ndarray, b: np.ndarray) -> None:
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if A.ndim != 4 or A.shape[-1] != A.shape[-2] or b.shape != A.shape[:3]:
            raise ValueError(f"Expected A of shape (n, N, d, d) and b of shape (n, N, d), got {A.shape}, {b.shape}")
        if not np.allclose(A, np.swapaxes(A, -1, -2)):
            raise ValueError("Quadratic matrices must be symmetric")
        sample_eigs = np.linalg.eigvalsh(A)
        if np.min(sample_eigs) < -1e-12:
            raise ValueError("Quadratic matrices must be positive semidefinite")

        n, N, d, _ = A.shape
        self._A = A
        self._b = b
        self._A_dev = A.mean(axis=1)
        self._b_dev = b.mean(axis=1)
        self._A_sum = self._A_dev.sum(axis=0)
        self._b_sum = self._b_dev.sum(axis=0)
        self._N = N

        sum_eigs = np.linalg.eigvalsh(self._A_sum)
        definite = sum_eigs[0] > 1e-12
        self._minimizer = linalg.solve(self._A_sum, self._b_sum, assume_a="pos") if definite else None

        constants = ProblemConstants(
            L=float(sum_eigs[-1]) / n,
            L_devices=tuple(float(np.linalg.eigvalsh(a)[-1]) for a in self._A_dev),
            L_samples=tuple(float(np.max(sample_eigs[i, :, -1])) for i in range(n)),
            mu_pl=float(sum_eigs[0]) / n if definite else None,
            mu_lsi=float(sum_eigs[0]) / n if definite else None,
            f_star=float(-0.5 * self._b_sum @ self._minimizer) / n if definite else None,
            log_normalizer=self._gaussian_log_normalizer() if definite else None,
        )
        super().__init__(d=d, n=n, constants=constants)

    @classmethod
    def from_devices(cls, matrices: np.ndarray, vectors: np.ndarray | None = None) -> QuadraticProblem:
        """One quadratic per device; matrices ``(n, d, d)`` or diagonals ``(n, d)``."""
        A = np.asarray(matrices, dtype=np.float64)
        if A.ndim == 2:
            A = np.stack([np.diag(row) for row in A])
        if A.ndim != 3:
            raise ValueError(f"Expected device matrices (n, d, d) or diagonals (n, d), got shape {A.shape}")
        b = np.zeros(A.shape[:2]) if vectors is None else np.asarray(vectors, dtype=np.float64)
        return cls(A[:, None], b[:, None])

    def _gaussian_log_normalizer(self) -> float:
        _, logdet = np.linalg.slogdet(self._A_sum)
        d = self._A_sum.shape[0]
        return 0.5 * d * math.log(2 * math.pi) - 0.5 * logdet + 0.5 * float(self._b_sum @ self._minimizer)

    @property
    def samples_per_device(self) -> int | None:
        return self._N

    @property
    def device_matrices(self) -> np.ndarray:
        return self._A_dev

    @property
    def device_vectors(self) -> np.ndarray:
        return self._b_dev

    @property
    def minimizer(self) -> np.ndarray | None:
        return self._minimizer

    def value_device(self, i: int, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        A, b = self._A_dev[self._device(i)], self._b_dev[i]
        return 0.5 * np.einsum("...j,jk,...k->...", x, A, x) - x @ b

    def grad_device(self, i: int, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        return x @ self._A_dev[self._device(i)] - self._b_dev[i]

    def grad_samples(self, i: int, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        idx = np.asarray(idx)
        A_sel = self._A[self._device(i)][idx]
        return (A_sel @ x[..., None, :, None])[..., 0] - self._b[i][idx]

    def expected_mean_value(
        self,
        law: GaussianSummary,
        rng: np.random.Generator | None = None,
        draws: int = 50_000,
    ) -> float:
        """F̄(m) + tr(A Σ) / 2n for ``law = N(m, Σ)``; exact, so ``rng`` and ``draws`` are unused."""
        if law.dim != self.d:
            raise DimensionError(f"Law of dimension {law.dim} for a problem of dimension {self.d}")
        spread = 0.5 * float(np.trace(self._A_sum @ law.full)) / self.n
        return float(self.mean_value(law.mean)) + spread

    def target_gaussian(self) -> GaussianSummary | None:
        if self._minimizer is None:
            return None
        cov = self.n * linalg.inv(self._A_sum)
        cov = 0.5 * (cov + cov.T)
        summary = GaussianSummary(self._minimizer, cov)
        return summary.diagonal() if summary.is_diagonal else summary

    def target_density(self) -> Callable[[np.ndarray], np.ndarray] | None:
        target = self.target_gaussian()
        if target is None:
            return None
        law = multivariate_normal(mean=target.mean, cov=target.full)
        return lambda points: np.exp(np.atleast_1d(law.logpdf(np.asarray(points).reshape(-1, self.d))))

    def describe(self) -> ProblemDescriptor:
        return ProblemDescriptor(
            kind=self.kind,
            d=self.d,
            n=self.n,
            samples_per_device=self._N,
            details={"condition_number": self.constants.L / self.constants.mu_pl if self.constants.mu_pl else None},
        )


def random_quadratic_arrays(
    n: int,
    d: int,
    rng: np.random.Generator,
    *,
    eigen_range: tuple[float, float] = (0.5, 2.0),
    samples_per_device: int = 1,
    diagonal: bool = True,
    shift_scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = eigen_range
    if not 0 <= lo <= hi:
        raise ValueError(f"Invalid eigenvalue range {eigen_range}")
    shape = (n, samples_per_device)
    eigs = rng.uniform(lo, hi, size=shape + (d,))
    A = eigs[..., :, None] * np.eye(d)
    if not diagonal and d > 1:
        for i in range(n):
            for j in range(samples_per_device):
                Q = ortho_group.rvs(d, random_state=rng)
                A[i, j] = Q @ np.diag(eigs[i, j]) @ Q.T
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
    b = rng.normal(scale=shift_scale, size=shape + (d,))
    return A, b


def make_quadratic(n: int, d: int, rng: np.random.Generator, **kwargs: object) -> QuadraticProblem:
    """Random strongly convex quadratic instance."""
    A, b = random_quadratic_arrays(n, d, rng, **kwargs)  # type: ignore[arg-type]
    problem = QuadraticProblem(A, b)
    logger.info("Built quadratic problem n=%d d=%d L=%.4g mu=%s", n, d, problem.constants.L, problem.constants.mu_pl)
    return problem
