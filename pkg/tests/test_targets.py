import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from src.metrics import GaussianSummary
from src.streams import Purpose, StreamFactory
from src.targets import (
    DimensionError,
    LogisticProblem,
    MissingConstantError,
    MixtureProblem,
    Problem,
    ProblemConstants,
    ProblemKindError,
    QuadraticProblem,
    StreamingProblem,
    check_gradient,
    estimate_smoothness,
    make_logistic,
    make_quadratic,
    make_streaming,
)


# ── gradients ───────────────────────────────────────────────────────


def test_identity_quadratic_gradient_is_the_point():
    problem = QuadraticProblem.from_devices(np.eye(2)[None])
    np.testing.assert_allclose(problem.grad_full(np.array([1.0, 2.0])), [1.0, 2.0])


def test_full_gradient_sums_devices():
    problem = QuadraticProblem.from_devices(np.ones((2, 1)))
    np.testing.assert_allclose(problem.grad_full(np.array([3.0])), [6.0])
    np.testing.assert_allclose(problem.grad_mean(np.array([3.0])), [3.0])


def test_device_gradient_with_shift():
    problem = QuadraticProblem.from_devices(np.array([[2.0]]), np.array([[1.0]]))
    np.testing.assert_allclose(problem.grad_device(0, np.array([1.0])), [1.0])


def test_device_gradients_add_up(quadratic, rng):
    x = rng.normal(size=(5, quadratic.d))
    total = sum(quadratic.grad_device(i, x) for i in range(quadratic.n))
    np.testing.assert_allclose(total - quadratic.grad_full(x), 0.0, atol=1e-12)


def test_symmetric_mixture_has_zero_gradient_at_origin():
    problem = MixtureProblem(0.5, np.array([-1.0, 1.0]), 1.0)
    np.testing.assert_allclose(problem.grad_full(np.array([0.0])), [0.0], atol=1e-14)
    assert check_gradient(problem, np.array([0.3])) < 1e-6


def test_logistic_single_sample_gradient_at_zero_margin():
    a = np.array([1.0, -2.0, 0.5])
    problem = LogisticProblem(a[None, None, :], np.array([[1.0]]), regularization=0.0)
    x = np.array([2.0, 1.0, 0.0])  # aᵀx = 0
    np.testing.assert_allclose(problem.grad_device(0, x), -a / 2)
    assert check_gradient(problem, x) < 1e-6


@pytest.mark.parametrize("device", [None, 0, 2])
def test_logistic_gradient_matches_finite_differences(rng, device):
    problem = make_logistic(3, 4, rng, samples_per_device=20)
    assert check_gradient(problem, rng.normal(size=4), device=device) < 1e-6


def test_batched_points_keep_leading_axes(quadratic, rng):
    x = rng.normal(size=(3, 2, quadratic.d))
    assert quadratic.grad_full(x).shape == (3, 2, quadratic.d)
    assert quadratic.value(x).shape == (3, 2)


def test_wrong_dimension_is_rejected(quadratic):
    with pytest.raises(DimensionError):
        quadratic.grad_full(np.zeros(quadratic.d + 1))


def test_device_index_out_of_range(quadratic):
    with pytest.raises(IndexError):
        quadratic.grad_device(quadratic.n, np.zeros(quadratic.d))


# ── finite sums and streams ─────────────────────────────────────────


def test_single_sample_finite_sum_matches_device(quadratic, rng):
    x = rng.normal(size=quadratic.d)
    np.testing.assert_allclose(quadratic.grad_sample(1, 0, x), quadratic.grad_device(1, x))


def test_device_gradient_is_mean_of_samples(rng):
    problem = make_quadratic(2, 3, rng, samples_per_device=5)
    x = rng.normal(size=3)
    samples = problem.grad_samples(1, np.arange(5), x)
    np.testing.assert_allclose(samples.mean(axis=0), problem.grad_device(1, x))


def test_sample_index_out_of_range(rng):
    problem = make_quadratic(1, 2, rng, samples_per_device=3)
    with pytest.raises(IndexError):
        problem.grad_sample(0, 3, np.zeros(2))


def test_noiseless_stream_gives_exact_gradient(rng):
    problem = StreamingProblem(np.stack([np.eye(2), 2 * np.eye(2)]), np.ones((2, 2)), 0.0)
    x = rng.normal(size=(4, 2))
    np.testing.assert_array_equal(problem.grad_stream(1, rng, x), problem.grad_device(1, x))


def test_stream_noise_has_declared_variance():
    problem = StreamingProblem(np.eye(3)[None], np.zeros((1, 3)), 2.0)
    draws = problem.sample_stream(0, StreamFactory(0)(Purpose.CHECK), (200_000,))
    assert np.mean(np.sum(draws**2, axis=-1)) == pytest.approx(4.0, rel=0.02)


def test_oracles_missing_for_kind(rng):
    mixture = MixtureProblem(0.9, np.array([-1.0, 1.0]), 0.25)
    with pytest.raises(ProblemKindError):
        mixture.grad_samples(0, np.array([0]), np.zeros(1))
    with pytest.raises(ProblemKindError):
        make_quadratic(1, 2, rng).sample_stream(0, rng, (3,))


# ── constants and densities ─────────────────────────────────────────


def test_standard_gaussian_log_normalizer():
    problem = QuadraticProblem.from_devices(np.ones((1, 3)))
    assert problem.log_normalizer() == pytest.approx(1.5 * math.log(2 * math.pi))


def test_scaled_gaussian_log_normalizer():
    problem = QuadraticProblem.from_devices(np.array([[2.0]]))
    assert problem.log_normalizer() == pytest.approx(0.5 * math.log(math.pi))


def test_mixture_is_normalized():
    problem = MixtureProblem(0.9, np.array([-1.0, 1.0]), 0.25)
    assert problem.log_normalizer() == 0.0
    grid = np.linspace(-8, 8, 40_001)[:, None]
    mass = trapezoid(problem.target_density()(grid), grid[:, 0])
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_mixture_smoothness_dominates_observed(rng):
    problem = MixtureProblem(0.9, np.array([-1.0, 1.0]), 0.25)
    assert problem.constants.L == pytest.approx(12.0)
    assert estimate_smoothness(problem, 0, rng) <= problem.constants.L * (1 + 1e-9)


def test_quadratic_constants_refer_to_device_average():
    problem = QuadraticProblem.from_devices(np.array([[1.0, 4.0], [3.0, 2.0]]))
    assert problem.constants.L == pytest.approx(3.0)
    assert problem.constants.mu_pl == pytest.approx(2.0)
    assert problem.constants.L_devices == pytest.approx((4.0, 3.0))


def test_gaussian_target_of_device_average():
    problem = QuadraticProblem.from_devices(np.ones((2, 2)))
    target = problem.target_gaussian()
    np.testing.assert_allclose(target.mean, 0.0)
    np.testing.assert_allclose(target.variances, 1.0)


def test_minimum_value_is_attained(quadratic):
    f_min = float(quadratic.mean_value(quadratic.minimizer))
    assert quadratic.constants.f_star == pytest.approx(f_min)


def test_logistic_minimum_is_below_samples(rng):
    problem = make_logistic(2, 3, rng, samples_per_device=30)
    values = problem.mean_value(rng.normal(size=(100, 3)))
    assert problem.constants.f_star <= values.min()


def test_declared_smoothness_must_not_exceed_devices():
    with pytest.raises(ValueError, match="exceeds"):
        ProblemConstants(L=5.0, L_devices=(1.0, 2.0))


def test_missing_constant_is_named():
    constants = ProblemConstants(L=1.0, L_devices=(1.0,))
    with pytest.raises(MissingConstantError, match="mu_lsi"):
        constants.require("mu_lsi")


def test_nonsymmetric_matrices_are_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        QuadraticProblem.from_devices(np.array([[[1.0, 2.0], [0.0, 1.0]]]))


# ── every kind ──────────────────────────────────────────────────────

KIND_BUILDERS = {
    "quadratic": lambda rng: make_quadratic(3, 4, rng, diagonal=False),
    "streaming": lambda rng: make_streaming(3, 4, rng, sigma=0.5, diagonal=False),
    "logistic": lambda rng: make_logistic(3, 4, rng, samples_per_device=20, regularization=0.1),
    "mixture": lambda rng: MixtureProblem(0.7, np.array([[-1.0, 0.5], [1.0, -0.5]]), 0.5, n=2),
}


@pytest.fixture(params=sorted(KIND_BUILDERS))
def any_problem(request, rng):
    return KIND_BUILDERS[request.param](rng)


def test_gradients_match_finite_differences_for_every_kind(any_problem, rng):
    for x in rng.normal(size=(5, any_problem.d)):
        assert check_gradient(any_problem, x) < 1e-5
        for i in range(any_problem.n):
            assert check_gradient(any_problem, x, device=i) < 1e-5


def test_device_smoothness_dominates_observed_for_every_kind(any_problem, rng):
    for i, L_i in enumerate(any_problem.constants.L_devices):
        assert estimate_smoothness(any_problem, i, rng) <= L_i * (1 + 1e-9)


def test_declared_pl_constant_holds_for_every_kind(any_problem, rng):
    c = any_problem.constants
    if c.mu_pl is None:
        pytest.skip(f"{any_problem.kind.value} declares no PL constant")
    x = rng.normal(scale=2.0, size=(1000, any_problem.d))
    grad_sq = np.sum(any_problem.grad_mean(x) ** 2, axis=-1)
    gap = any_problem.mean_value(x) - c.f_star
    assert np.all(grad_sq >= 2 * c.mu_pl * gap * (1 - 1e-9) - 1e-10)


# ── expectations under a Gaussian start ─────────────────────────────


def test_quadratic_expectation_matches_sampling(quadratic, rng):
    law = GaussianSummary(np.full(quadratic.d, 0.3), np.full(quadratic.d, 0.5))
    exact = quadratic.expected_mean_value(law)
    sampled = Problem.expected_mean_value(quadratic, law, rng, draws=200_000)
    assert exact == pytest.approx(sampled, abs=0.02)
    assert exact > float(quadratic.mean_value(law.mean))


def test_point_law_expectation_is_value_at_mean(quadratic):
    law = GaussianSummary(np.ones(quadratic.d), np.zeros(quadratic.d))
    assert quadratic.expected_mean_value(law) == pytest.approx(float(quadratic.mean_value(np.ones(quadratic.d))))


def test_mixture_expectation_matches_quadrature():
    problem = MixtureProblem(0.5, np.array([-1.0, 1.0]), 0.5)
    law = GaussianSummary(np.array([0.5]), np.array([1.0]))
    grid = np.linspace(-10.0, 11.0, 20_001)
    weights = np.exp(-0.5 * (grid - 0.5) ** 2) / math.sqrt(2 * math.pi)
    expected = trapezoid(problem.mean_value(grid[:, None]) * weights, grid)
    assert problem.expected_mean_value(law) == pytest.approx(expected, abs=0.05)


def test_expectation_rejects_wrong_dimension(quadratic):
    with pytest.raises(DimensionError):
        quadratic.expected_mean_value(GaussianSummary(np.zeros(quadratic.d + 1), np.ones(quadratic.d + 1)))
