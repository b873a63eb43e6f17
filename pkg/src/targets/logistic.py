from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from src.targets.base_problem import Problem, ProblemConstants, ProblemDescriptor, ProblemKind

logger = logging.getLogger(__name__)


class LogisticProblem(Problem):
    """Regularised logistic regression, each device averaging over its N samples.

    F_ij(x) = log(1 + exp(−y_ij a_ijᵀx)) + (λ/2)‖x‖² with labels y_ij ∈ {−1, +1}.
    The regulariser makes the device average λ-strongly convex, hence PL and LSI
    with constant λ.
    """

    kind = ProblemKind.LOGISTIC

    def __init__(self, features: np.ndarray, labels: np.ndarray, regularization: float = 1e-2) -> None:
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        if features.ndim != 3 or labels.shape != features.shape[:2]:
            raise ValueError(
                f"Expected features (n, N, d) and labels (n, N), got {features.shape} and {labels.shape}"
            )
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("Labels must be -1 or +1")
        if regularization < 0:
            raise ValueError(f"Regularization must be nonnegative, got {regularization}")

        n, N, d = features.shape
        self._a = features
        self._y = labels
        self._lam = float(regularization)
        self._N = N

        def top_eig(rows: np.ndarray) -> float:
            return float(np.linalg.eigvalsh(rows.T @ rows / rows.shape[0])[-1])

        constants = ProblemConstants(
            L=top_eig(features.reshape(-1, d)) / 4 + self._lam,
            L_devices=tuple(top_eig(features[i]) / 4 + self._lam for i in range(n)),
            L_samples=tuple(float(np.max(np.sum(features[i] ** 2, axis=-1))) / 4 + self._lam for i in range(n)),
            mu_pl=self._lam if self._lam > 0 else None,
            mu_lsi=self._lam if self._lam > 0 else None,
        )
        super().__init__(d=d, n=n, constants=constants)
        if self._lam > 0:
            self.constants = replace(constants, f_star=self._solve_minimum())

    def _solve_minimum(self) -> float:
        result = minimize(
            lambda x: float(self.mean_value(x)),
            np.zeros(self.d),
            jac=lambda x: self.grad_mean(x),
            method="L-BFGS-B",
            options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 10_000},
        )
        logger.debug("Logistic minimum %.12g after %d iterations", result.fun, result.nit)
        return float(result.fun)

    @property
    def samples_per_device(self) -> int | None:
        return self._N

    def _margins(self, i: int, x: np.ndarray) -> np.ndarray:
        return self._y[i] * (x @ self._a[i].T)  # (..., N)

    def value_device(self, i: int, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        margins = self._margins(self._device(i), x)
        return np.mean(np.logaddexp(0.0, -margins), axis=-1) + 0.5 * self._lam * np.sum(x**2, axis=-1)

    def grad_device(self, i: int, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        weights = -self._y[self._device(i)] * expit(-self._margins(i, x)) / self._N
        return weights @ self._a[i] + self._lam * x

    def grad_samples(self, i: int, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        x = self._point(x)
        idx = np.asarray(idx)
        a = self._a[self._device(i)][idx]  # idx.shape + (d,)
        y = self._y[i][idx]
        margins = y * np.sum(a * x[..., None, :], axis=-1)
        return (-y * expit(-margins))[..., None] * a + self._lam * x[..., None, :]

    def describe(self) -> ProblemDescriptor:
        return ProblemDescriptor(
            kind=self.kind,
            d=self.d,
            n=self.n,
            samples_per_device=self._N,
            details={"regularization": self._lam},
        )


def make_logistic(
    n: int,
    d: int,
    rng: np.random.Generator,
    *,
    samples_per_device: int = 50,
    regularization: float = 1e-2,
    feature_scale: float = 1.0,
) -> LogisticProblem:
    """Synthetic data: Gaussian features labelled by a planted separator with label noise."""
    features = rng.normal(scale=feature_scale, size=(n, samples_per_device, d))
    planted = rng.normal(size=d)
    logits = features @ planted
    labels = np.where(rng.random(logits.shape) < expit(logits), 1.0, -1.0)
    problem = LogisticProblem(features, labels, regularization)
    logger.info("Built logistic problem n=%d N=%d d=%d L=%.4g", n, samples_per_device, d, problem.constants.L)
    return problem
