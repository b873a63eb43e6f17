import logging

import numpy as np
import pytest

from src.compression import BitAccounting, CompressorKind, CompressorSpec
from src.dynamics import (
    Algorithm,
    Mode,
    RunSpec,
    StepSizeCapError,
    applicable_cap,
    langevin_marina_run,
    langevin_run,
    marina_run,
)
from src.estimators import EstimatorKind, EstimatorSpec, build_estimator
from src.targets import MixtureProblem, QuadraticProblem, make_quadratic

IDENTITY_EXACT = EstimatorSpec(EstimatorKind.VANILLA, CompressorSpec(CompressorKind.IDENTITY), p=1.0)


def _rand_k(k: int, p: float) -> EstimatorSpec:
    return EstimatorSpec(EstimatorKind.VANILLA, CompressorSpec(CompressorKind.RAND_K, k=k), p=p)


# ── MARINA ──────────────────────────────────────────────────────────


def test_exact_marina_is_gradient_descent(scalar_quadratic):
    run = RunSpec(Mode.OPTIMIZE, h=0.1, K=30, init_mean=1.0)
    trajectory = marina_run(scalar_quadratic, IDENTITY_EXACT, run)
    np.testing.assert_allclose(trajectory.chain_mean[:, 0], 0.9 ** np.arange(31), rtol=1e-12)
    np.testing.assert_allclose(trajectory.final[:, 0], [0.9**30], rtol=1e-12)


def test_exact_marina_objective_is_monotone(quadratic):
    run = RunSpec(Mode.OPTIMIZE, h=0.05, K=50, chains=3, init_std=2.0)
    trajectory = marina_run(quadratic, IDENTITY_EXACT, run)
    assert np.all(np.diff(trajectory.objective) <= 1e-12)


def test_compressed_marina_converges(quadratic):
    spec = _rand_k(2, 0.25)
    estimator = build_estimator(spec, quadratic)
    h = applicable_cap(Mode.OPTIMIZE, quadratic, estimator)
    trajectory = marina_run(quadratic, spec, RunSpec(Mode.OPTIMIZE, h=h, K=2000, chains=4, init_mean=2.0))
    assert trajectory.grad_norm_sq[-1] < 1e-3 * trajectory.grad_norm_sq[0]


def test_marina_accounting(quadratic):
    spec = _rand_k(2, 0.3)
    trajectory = marina_run(quadratic, spec, RunSpec(Mode.OPTIMIZE, h=0.01, K=40, chains=5))
    n, d = quadratic.n, quadratic.d
    assert trajectory.algorithm is Algorithm.MARINA
    assert trajectory.uplink.shape == (41, 5)
    np.testing.assert_array_equal(trajectory.uplink[0], n * d * 64)
    assert trajectory.downlink[0] == 0
    np.testing.assert_array_equal(trajectory.downlink[1:], d * 64)
    expected = np.where(trajectory.refresh[1:], n * d * 64, n * 2 * 96)
    np.testing.assert_array_equal(trajectory.uplink[1:], expected)
    assert trajectory.cum_bits[-1] == trajectory.uplink[:, 0].sum() + trajectory.downlink.sum()
    assert np.all(np.diff(trajectory.cum_bits) > 0)


# ── sampling ────────────────────────────────────────────────────────


def test_exact_langevin_marina_reduces_to_langevin(scalar_quadratic):
    run = RunSpec(Mode.SAMPLE, h=0.1, K=200, chains=16, seed=5, init_std=1.0, snapshots=(0, 1, 100, 200))
    marina = langevin_marina_run(scalar_quadratic, IDENTITY_EXACT, run)
    plain = langevin_run(scalar_quadratic, run)
    for k in run.snapshots:
        np.testing.assert_array_equal(marina.snapshots[k], plain.snapshots[k])


def test_reduction_with_several_devices(quadratic):
    run = RunSpec(Mode.SAMPLE, h=0.02, K=100, chains=8, seed=9, init_std=1.0, snapshots=(50, 100))
    marina = langevin_marina_run(quadratic, IDENTITY_EXACT, run)
    plain = langevin_run(quadratic, run)
    for k in run.snapshots:
        np.testing.assert_allclose(marina.snapshots[k], plain.snapshots[k], atol=1e-12, rtol=0)


def test_stationary_chain_variance(scalar_quadratic):
    h = 0.1
    run = RunSpec(Mode.SAMPLE, h=h, K=400, chains=10_000, seed=1, init_std=1.0)
    trajectory = langevin_run(scalar_quadratic, run)
    stationary = float(np.mean(trajectory.chain_var[-100:, 0]))
    assert stationary == pytest.approx(1 / (1 - h / 2), rel=0.02)
    assert stationary == pytest.approx(1.0526, rel=0.02)


def test_shared_noise_seed_saves_one_broadcast(quadratic):
    spec = _rand_k(2, 0.2)
    base = RunSpec(Mode.SAMPLE, h=1e-3, K=20, seed=4)
    shared = RunSpec(Mode.SAMPLE, h=1e-3, K=20, seed=4, shared_noise_seed=True)
    full = langevin_marina_run(quadratic, spec, base)
    cheap = langevin_marina_run(quadratic, spec, shared)
    np.testing.assert_array_equal(full.downlink[1:] - cheap.downlink[1:], quadratic.d * 64)
    np.testing.assert_array_equal(full.final, cheap.final)


def test_sampler_downlink_with_custom_widths(quadratic):
    trajectory = langevin_marina_run(
        quadratic, _rand_k(2, 0.2), RunSpec(Mode.SAMPLE, h=1e-3, K=5), BitAccounting(value_bits=32, index_bits=16)
    )
    np.testing.assert_array_equal(trajectory.downlink[1:], 2 * quadratic.d * 32)


def test_plain_langevin_accounting(quadratic):
    trajectory = langevin_run(quadratic, RunSpec(Mode.SAMPLE, h=1e-3, K=5, chains=2))
    assert trajectory.algorithm is Algorithm.LANGEVIN
    np.testing.assert_array_equal(trajectory.uplink, quadratic.n * quadratic.d * 64)
    np.testing.assert_array_equal(trajectory.downlink, [0] + [quadratic.d * 64] * 5)
    assert trajectory.refresh.all()


def test_same_seed_same_trajectory(quadratic):
    run = RunSpec(Mode.SAMPLE, h=0.005, K=30, chains=4, seed=11, init_std=1.0)
    first = langevin_marina_run(quadratic, _rand_k(3, 0.3), run)
    second = langevin_marina_run(quadratic, _rand_k(3, 0.3), run)
    np.testing.assert_array_equal(first.final, second.final)
    np.testing.assert_array_equal(first.uplink, second.uplink)

    other = langevin_marina_run(quadratic, _rand_k(3, 0.3), RunSpec(Mode.SAMPLE, h=0.005, K=30, chains=4, seed=12, init_std=1.0))
    assert not np.array_equal(first.final, other.final)


def test_pooled_samples(scalar_quadratic):
    run = RunSpec(Mode.SAMPLE, h=0.1, K=20, chains=3, sample_from=5, sample_every=5)
    trajectory = langevin_run(scalar_quadratic, run)
    assert trajectory.pooled.shape == (4 * 3, 1)


def test_moments_of_deterministic_chains(scalar_quadratic):
    trajectory = marina_run(scalar_quadratic, IDENTITY_EXACT, RunSpec(Mode.OPTIMIZE, h=0.1, K=3, chains=4, init_mean=1.0))
    summary = trajectory.moments(3)
    np.testing.assert_allclose(summary.mean, [0.9**3])
    np.testing.assert_allclose(summary.variances, 0.0, atol=1e-30)


# ── step-size caps ──────────────────────────────────────────────────


def test_cap_violation_is_enforced(quadratic):
    run = RunSpec(Mode.OPTIMIZE, h=10.0, K=3, enforce_cap=True)
    with pytest.raises(StepSizeCapError):
        marina_run(quadratic, _rand_k(2, 0.5), run)


def test_cap_violation_only_warns_by_default(quadratic, caplog):
    with caplog.at_level(logging.WARNING):
        marina_run(quadratic, _rand_k(2, 0.5), RunSpec(Mode.OPTIMIZE, h=0.5, K=3))
    assert "theoretical cap" in caplog.text


def test_sampling_cap_needs_lsi_constant(caplog):
    mixture = MixtureProblem(0.9, np.array([-1.0, 1.0]), 0.25)
    estimator = build_estimator(IDENTITY_EXACT, mixture)
    with caplog.at_level(logging.WARNING):
        assert applicable_cap(Mode.SAMPLE, mixture, estimator) is None
    assert "No LSI constant" in caplog.text
    assert applicable_cap(Mode.OPTIMIZE, mixture, estimator) == pytest.approx(0.1 / 12)


def test_sampling_cap_uses_lsi_constant(rng):
    problem = make_quadratic(2, 3, rng)
    estimator = build_estimator(IDENTITY_EXACT, problem)
    L, mu = problem.constants.L, problem.constants.mu_lsi
    assert applicable_cap(Mode.SAMPLE, problem, estimator) == pytest.approx(min(1 / (14 * L), 1 / (6 * mu)))


# ── run specs ───────────────────────────────────────────────────────


def test_runner_checks_mode(quadratic):
    with pytest.raises(ValueError, match="optimize"):
        marina_run(quadratic, IDENTITY_EXACT, RunSpec(Mode.SAMPLE, h=0.01, K=2))
    with pytest.raises(ValueError, match="sample"):
        langevin_marina_run(quadratic, IDENTITY_EXACT, RunSpec(Mode.OPTIMIZE, h=0.01, K=2))


@pytest.mark.parametrize(
    "fields",
    [dict(h=0.0, K=1), dict(h=0.1, K=0), dict(h=0.1, K=1, chains=0), dict(h=0.1, K=1, init_std=-1.0)],
)
def test_invalid_run_spec(fields):
    with pytest.raises(ValueError):
        RunSpec(Mode.OPTIMIZE, **fields)


def test_initial_law_broadcasts_mean():
    law = RunSpec(Mode.SAMPLE, h=0.1, K=1, init_mean=(1.0, -1.0), init_std=0.5).initial_law(2)
    np.testing.assert_array_equal(law.mean, [1.0, -1.0])
    np.testing.assert_array_equal(law.variances, [0.25, 0.25])


def test_two_device_reduction_problem():
    problem = QuadraticProblem.from_devices(np.array([[1.0, 2.0], [3.0, 2.0]]))
    run = RunSpec(Mode.SAMPLE, h=0.05, K=10, chains=2, seed=2, snapshots=(10,))
    marina = langevin_marina_run(problem, IDENTITY_EXACT, run)
    plain = langevin_run(problem, run)
    np.testing.assert_allclose(marina.snapshots[10], plain.snapshots[10], atol=1e-12, rtol=0)
