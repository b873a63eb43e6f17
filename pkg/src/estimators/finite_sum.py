from __future__ import annotations

import numpy as np

from src.estimators.base_estimator import EstimatorKind, MarinaConstants, MarinaEstimator
from src.targets import Problem, ProblemKindError


class FiniteSumEstimator(MarinaEstimator):
    """Full local gradients on refresh; compressed minibatch differences otherwise.

    Minibatch indices are drawn uniformly with replacement, the same indices
    being used at x_k and x_{k+1}.
    """

    kind = EstimatorKind.FINITE_SUM

    def _check_problem(self, problem: Problem) -> None:
        if problem.samples_per_device is None:
            raise ProblemKindError(f"finite_sum estimator needs a finite-sum problem, got {problem.kind.value}")

    def _initial(self, i: int, x0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.problem.grad_device(i, x0)

    def _refresh(self, i: int, x_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.problem.grad_device(i, x_next)

    def _difference(self, i: int, x_prev: np.ndarray, x_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, self.problem.samples_per_device, size=(x_next.shape[0], self.spec.minibatch))
        diffs = self.problem.grad_samples(i, idx, x_next) - self.problem.grad_samples(i, idx, x_prev)
        return diffs.mean(axis=-2)

    def constants(self) -> MarinaConstants:
        declared = self.problem.constants
        omega = self.compressor.omega
        samples = declared.L_samples if declared.L_samples is not None else declared.L_devices
        alpha = omega * self._smoothness_ratio(declared.L_devices)
        alpha += (1 + omega) * self._smoothness_ratio(samples) / self.spec.minibatch
        return MarinaConstants(alpha=alpha, theta=0.0, p=self.spec.p)

    def initial_error(self) -> float:
        return 0.0
