from __future__ import annotations

import numpy as np

from src.estimators.base_estimator import EstimatorKind, MarinaConstants, MarinaEstimator, require_kind
from src.targets import Problem, ProblemKind


class OnlineEstimator(MarinaEstimator):
    """Streaming data: b-sample minibatch on refresh, compressed b'-sample differences otherwise.

    The refresh batch is drawn independently of the b'-minibatch; each b'-sample
    is evaluated at both x_k and x_{k+1}.
    """

    kind = EstimatorKind.ONLINE

    def _check_problem(self, problem: Problem) -> None:
        require_kind(problem, (ProblemKind.STREAMING,), "online")

    def _minibatch_grad(self, i: int, x: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
        xi = self.problem.sample_stream(i, rng, (x.shape[0], size))
        return self.problem.grad_at_sample(i, xi, x[:, None, :]).mean(axis=-2)

    def _initial(self, i: int, x0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self._minibatch_grad(i, x0, rng, self.spec.batch)

    def _refresh(self, i: int, x_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self._minibatch_grad(i, x_next, rng, self.spec.batch)

    def _difference(self, i: int, x_prev: np.ndarray, x_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        xi = self.problem.sample_stream(i, rng, (x_next.shape[0], self.spec.minibatch))
        diffs = self.problem.grad_at_sample(i, xi, x_next[:, None, :]) - self.problem.grad_at_sample(
            i, xi, x_prev[:, None, :]
        )
        return diffs.mean(axis=-2)

    def _noise_floor(self) -> float:
        sigma = np.asarray(self.problem.constants.require("sigma"))
        return float(np.sum(sigma**2)) / (self.problem.n**2 * self.spec.batch)

    def constants(self) -> MarinaConstants:
        declared = self.problem.constants
        omega = self.compressor.omega
        samples = declared.L_samples if declared.L_samples is not None else declared.L_devices
        alpha = omega * self._smoothness_ratio(declared.L_devices)
        alpha += (1 + omega) * self._smoothness_ratio(samples) / self.spec.minibatch
        return MarinaConstants(alpha=alpha, theta=self.spec.p * self._noise_floor(), p=self.spec.p)

    def initial_error(self) -> float:
        return self._noise_floor()
