from src.targets.base_problem import (
    DimensionError,
    MissingConstantError,
    Problem,
    ProblemConstants,
    ProblemKind,
    ProblemKindError,
    check_gradient,
    estimate_smoothness,
)
from src.targets.quadratic import QuadraticProblem, make_quadratic
from src.targets.streaming import StreamingProblem, make_streaming
from src.targets.mixture import MixtureProblem
from src.targets.logistic import LogisticProblem, make_logistic

__all__ = [
    "DimensionError",
    "LogisticProblem",
    "MissingConstantError",
    "MixtureProblem",
    "Problem",
    "ProblemConstants",
    "ProblemKind",
    "ProblemKindError",
    "QuadraticProblem",
    "StreamingProblem",
    "check_gradient",
    "estimate_smoothness",
    "make_logistic",
    "make_quadratic",
    "make_streaming",
]
