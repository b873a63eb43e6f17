from src.dynamics.theory import (
    OPTIMIZATION_BOUNDS,
    SAMPLING_BOUNDS,
    BoundKind,
    StepSizeCapError,
    TheoryError,
    TheoryParams,
    batch_for_residual,
    check_step_size,
    gaussian_langevin_law,
    step_cap_opt,
    step_cap_opt_pl,
    step_cap_sampling,
    theory_bound,
    theory_floor,
    theory_params,
)
from src.dynamics.engine import (
    Algorithm,
    Mode,
    RunSpec,
    Trajectory,
    applicable_cap,
    langevin_marina_run,
    langevin_run,
    marina_run,
)

__all__ = [
    "OPTIMIZATION_BOUNDS",
    "SAMPLING_BOUNDS",
    "Algorithm",
    "BoundKind",
    "Mode",
    "RunSpec",
    "StepSizeCapError",
    "TheoryError",
    "TheoryParams",
    "Trajectory",
    "applicable_cap",
    "batch_for_residual",
    "check_step_size",
    "gaussian_langevin_law",
    "langevin_marina_run",
    "langevin_run",
    "marina_run",
    "step_cap_opt",
    "step_cap_opt_pl",
    "step_cap_sampling",
    "theory_bound",
    "theory_floor",
    "theory_params",
]
