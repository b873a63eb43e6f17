"""End-to-end behaviour on small instances: envelopes, bias floors and sweeps.

These runs take seconds to minutes each; deselect with ``-m "not slow"``.
"""

import asyncio

import numpy as np
import pytest

from src.compression import CompressorKind, CompressorSpec
from src.config import load_config, with_overrides
from src.dynamics import (
    BoundKind,
    Mode,
    RunSpec,
    langevin_marina_run,
    marina_run,
    step_cap_opt,
    step_cap_opt_pl,
    step_cap_sampling,
    theory_bound,
    theory_params,
)
from src.estimators import EstimatorKind, EstimatorSpec, build_estimator
from src.metrics import w2_sq_moment
from src.reporting import read_csv
from src.targets import StreamingProblem, make_quadratic
from tests.conftest import CONFIG_DIR

pytestmark = pytest.mark.slow

RAND_2 = CompressorSpec(CompressorKind.RAND_K, k=2)


def _noiseless_params(problem, estimator, h, x0, rho0=None):
    constants = estimator.constants()
    return theory_params(
        problem,
        h=h,
        p=constants.p,
        alpha=constants.alpha,
        theta=0.0,
        G0=estimator.initial_error(),
        x0=x0,
        rho0=rho0,
    )


# ── optimization ────────────────────────────────────────────────────


def test_objective_gap_stays_under_pl_envelope(rng):
    problem = make_quadratic(4, 8, rng, diagonal=False)
    spec = EstimatorSpec(EstimatorKind.VANILLA, RAND_2, p=0.25)
    estimator = build_estimator(spec, problem)
    constants, c = estimator.constants(), problem.constants
    h = step_cap_opt_pl(c.L, constants.p, constants.alpha, c.mu_pl)
    trajectory = marina_run(problem, spec, RunSpec(Mode.OPTIMIZE, h=h, K=500, chains=200, seed=1, init_mean=1.0))

    params = _noiseless_params(problem, estimator, h, np.ones(problem.d))
    envelope = theory_bound(BoundKind.OPT_PL, params, np.arange(trajectory.K + 1))
    gap = trajectory.objective - c.f_star
    assert np.all(gap <= envelope * (1 + 1e-9) + 1e-12)


@pytest.mark.parametrize("K", [100, 500])
def test_average_gradient_norm_stays_under_envelope(rng, K):
    problem = make_quadratic(4, 8, rng, diagonal=False)
    spec = EstimatorSpec(EstimatorKind.VANILLA, RAND_2, p=0.25)
    estimator = build_estimator(spec, problem)
    constants = estimator.constants()
    h = step_cap_opt(problem.constants.L, constants.p, constants.alpha)
    trajectory = marina_run(problem, spec, RunSpec(Mode.OPTIMIZE, h=h, K=K, chains=200, seed=2, init_mean=1.0))

    params = _noiseless_params(problem, estimator, h, np.ones(problem.d))
    average = float(np.mean(trajectory.grad_norm_sq[:K]))
    assert average <= float(theory_bound(BoundKind.OPT_AVG_GRAD, params, K)) * 1.10


# ── sampling ────────────────────────────────────────────────────────


def test_gaussian_w2_stays_under_envelope_and_decreases(rng):
    problem = make_quadratic(4, 10, rng, diagonal=True)
    spec = EstimatorSpec(EstimatorKind.VANILLA, RAND_2, p=0.2)
    estimator = build_estimator(spec, problem)
    constants, c = estimator.constants(), problem.constants
    h = step_cap_sampling(c.L, constants.p, constants.alpha, c.mu_lsi)
    run = RunSpec(Mode.SAMPLE, h=h, K=1500, chains=1000, seed=3, init_mean=3.0, init_std=1.0)
    trajectory = langevin_marina_run(problem, spec, run)

    target = problem.target_gaussian()
    rho0 = run.initial_law(problem.d)
    params = _noiseless_params(problem, estimator, h, np.asarray(run.init_mean), rho0)
    ks = np.arange(run.K + 1)
    envelope = theory_bound(BoundKind.W22, params, ks)
    proxy = np.array([w2_sq_moment(trajectory.moments(k), target) for k in ks])
    assert np.all(proxy <= envelope)

    windows = proxy[: 15 * 100].reshape(15, 100).mean(axis=1)
    assert np.all(np.diff(windows) <= 0.01 * windows[0])


def _online_plateau(batch: int, seed: int) -> float:
    problem = StreamingProblem(np.ones((1, 1, 1)), np.zeros((1, 1)), 1.0)
    spec = EstimatorSpec(EstimatorKind.ONLINE, CompressorSpec(CompressorKind.IDENTITY), p=0.1, batch=batch)
    run = RunSpec(Mode.SAMPLE, h=0.1, K=500, chains=5000, seed=seed, init_std=1.0)
    trajectory = langevin_marina_run(problem, spec, run)
    target = problem.target_gaussian()
    tail = range(run.K - run.K // 5 + 1, run.K + 1)
    return float(np.mean([w2_sq_moment(trajectory.moments(k), target) for k in tail]))


def test_online_bias_floor_shrinks_with_batch():
    small = np.mean([_online_plateau(5, seed) for seed in range(5)])
    large = np.mean([_online_plateau(20, seed) for seed in range(5)])
    assert 2.0 <= small / large <= 8.0


@pytest.mark.parametrize("baseline", [False, True])
def test_mixture_histogram_distance(orchestrator, tmp_path, baseline):
    config = load_config(CONFIG_DIR / "mixture.yaml", overrides=[f"run.baseline={str(baseline).lower()}"])
    final = orchestrator.run_experiment(config, tmp_path / "mixture").header["final"]
    assert final["pooled_samples"] >= 100_000
    assert final["tv_histogram"] <= 0.05


# ── sweeps ──────────────────────────────────────────────────────────


def test_online_sweep_plateau_falls_with_batch(orchestrator, tmp_path):
    config = with_overrides(load_config(CONFIG_DIR / "online.yaml"), {"run.chains": 5000})
    path = asyncio.run(orchestrator.sweep(config, {"estimator.batch": [2, 8, 32]}, tmp_path / "sweep"))
    plateaus = [float(row["plateau_objective"]) for row in read_csv(path)]
    assert plateaus[0] > plateaus[1] > plateaus[2]
