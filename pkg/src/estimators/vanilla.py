from __future__ import annotations

import numpy as np

from src.estimators.base_estimator import EstimatorKind, MarinaConstants, MarinaEstimator
from src.targets import Problem


class VanillaEstimator(MarinaEstimator):
    """Full local gradients on refresh, compressed gradient differences otherwise."""

    kind = EstimatorKind.VANILLA

    def _check_problem(self, problem: Problem) -> None:
        pass

    def _initial(self, i: int, x0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.problem.grad_device(i, x0)

    def _refresh(self, i: int, x_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.problem.grad_device(i, x_next)

    def _difference(self, i: int, x_prev: np.ndarray, x_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.problem.grad_device(i, x_next) - self.problem.grad_device(i, x_prev)

    def constants(self) -> MarinaConstants:
        alpha = self.compressor.omega * self._smoothness_ratio(self.problem.constants.L_devices)
        return MarinaConstants(alpha=alpha, theta=0.0, p=self.spec.p)

    def initial_error(self) -> float:
        return 0.0
