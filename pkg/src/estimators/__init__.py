from __future__ import annotations

import logging

import numpy as np

from src.compression import BitAccounting
from src.estimators.base_estimator import (
    CoinScope,
    EstimatorKind,
    EstimatorSpec,
    EstimatorState,
    MarinaConstants,
    MarinaEstimator,
    default_p,
)
from src.estimators.finite_sum import FiniteSumEstimator
from src.estimators.online import OnlineEstimator
from src.estimators.vanilla import VanillaEstimator
from src.targets import Problem

logger = logging.getLogger(__name__)

_VARIANTS: dict[EstimatorKind, type[MarinaEstimator]] = {
    EstimatorKind.VANILLA: VanillaEstimator,
    EstimatorKind.FINITE_SUM: FiniteSumEstimator,
    EstimatorKind.ONLINE: OnlineEstimator,
}


def build_estimator(spec: EstimatorSpec, problem: Problem, accounting: BitAccounting | None = None) -> MarinaEstimator:
    estimator = _VARIANTS[spec.kind](spec, problem, accounting)
    logger.debug("Built %r", estimator)
    return estimator


def marina_constants(spec: EstimatorSpec, problem: Problem) -> MarinaConstants:
    return build_estimator(spec, problem).constants()


def initial_error(spec: EstimatorSpec, problem: Problem) -> float:
    return build_estimator(spec, problem).initial_error()


def estimator_error(state: EstimatorState, problem: Problem, x: np.ndarray) -> np.ndarray:
    """Per-chain ‖g − ∇F̄(x)‖²."""
    x = np.asarray(x, dtype=np.float64)
    return np.sum((state.g - problem.grad_mean(x)) ** 2, axis=-1)


__all__ = [
    "CoinScope",
    "EstimatorKind",
    "EstimatorSpec",
    "EstimatorState",
    "FiniteSumEstimator",
    "MarinaConstants",
    "MarinaEstimator",
    "OnlineEstimator",
    "VanillaEstimator",
    "build_estimator",
    "default_p",
    "estimator_error",
    "initial_error",
    "marina_constants",
]
