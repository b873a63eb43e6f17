"""Property suite: Monte-Carlo and exact checks of the compression, estimator, dynamics and metric contracts."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from src.compression import (
    BitAccounting,
    Compressor,
    CompressorKind,
    CompressorSpec,
    IdentityCompressor,
    RandKCompressor,
    StochasticRoundCompressor,
    encoded_bits,
    measure_omega,
)
from src.dynamics import Mode, RunSpec, gaussian_langevin_law, langevin_marina_run, langevin_run, marina_run
from src.estimators import EstimatorKind, EstimatorSpec, EstimatorState, build_estimator
from src.metrics import GaussianSummary, kl_gaussian, tv_gaussian_1d, w2_gaussian
from src.streams import Purpose, StreamFactory
from src.targets import Problem, QuadraticProblem, make_quadratic, make_streaming

logger = logging.getLogger(__name__)

# s|u_j| ∈ {1.5, 0.5} for d=16, s=4: every fractional part is ½
_WORST_ROUNDING_DIRECTION = np.array([0.375] * 6 + [0.125] * 10)


@dataclass
class Check:
    name: str
    passed: bool
    measured: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "measured": self.measured}


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "failed": [check.name for check in self.checks if not check.passed],
            "checks": [check.to_dict() for check in self.checks],
        }


@dataclass(frozen=True)
class SuiteSizes:
    draws: int = 100_000
    points: int = 20
    replications: int = 10_000
    chains: int = 10_000

    @classmethod
    def quick(cls) -> SuiteSizes:
        return cls(draws=20_000, points=5, replications=2_000, chains=2_000)


# ── compression ─────────────────────────────────────────────────────


def check_unbiased(compressor: Compressor, x: np.ndarray, rng: np.random.Generator, draws: int) -> dict[str, float]:
    """Largest coordinate deviation of the Monte-Carlo mean, in standard errors."""
    samples = compressor(np.broadcast_to(x, (draws, x.shape[-1])), rng)
    se = samples.std(axis=0, ddof=1) / math.sqrt(draws)
    deviation = np.abs(samples.mean(axis=0) - x)
    zero_spread = se == 0
    if np.any(deviation[zero_spread] > 1e-12):
        return {"max_z": math.inf}
    z = deviation[~zero_spread] / se[~zero_spread]
    return {"max_z": float(z.max()) if z.size else 0.0}


def compression_checks(sizes: SuiteSizes, streams: StreamFactory) -> list[Check]:
    d = 16
    compressors: list[Compressor] = [RandKCompressor(d, 4), StochasticRoundCompressor(d, 4)]
    checks = []
    for index, compressor in enumerate(compressors):
        rng = streams(Purpose.CHECK, index, 1)
        xs = rng.normal(size=(sizes.points, d))
        if isinstance(compressor, StochasticRoundCompressor):
            xs = np.vstack([xs, _WORST_ROUNDING_DIRECTION])
        z = max(check_unbiased(compressor, x, rng, sizes.draws)["max_z"] for x in xs)
        ratios = [measure_omega(compressor, x, rng, sizes.draws) for x in xs]
        name = type(compressor).__name__
        checks.append(Check(f"{name}.unbiased", z <= 4.0, {"max_z": z}))
        checks.append(
            Check(
                f"{name}.variance_bound",
                max(ratios) <= compressor.omega * 1.05 + 1e-12,
                {"max_ratio": max(ratios), "omega": compressor.omega},
            )
        )
        if isinstance(compressor, RandKCompressor):
            rel = abs(float(np.mean(ratios)) - compressor.omega) / compressor.omega
            checks.append(Check(f"{name}.omega_exact", rel <= 0.02, {"relative_error": rel}))
        zero = compressor(np.zeros((4, d)), rng)
        checks.append(Check(f"{name}.zero_maps_to_zero", bool(np.all(zero == 0)), {}))

    accounting = BitAccounting(64, 32)
    rng = streams(Purpose.CHECK, 9, 1)
    sparse = encoded_bits(RandKCompressor(100, 10).compress(rng.normal(size=100), rng), accounting)
    dense = encoded_bits(IdentityCompressor(100).compress(rng.normal(size=100), rng), accounting)
    checks.append(Check("accounting.message_bits", sparse == 960 and dense == 6400, {"sparse": sparse, "dense": dense}))
    return checks


# ── estimators ──────────────────────────────────────────────────────


def recursion_gap(
    problem: Problem,
    spec: EstimatorSpec,
    x_prev: np.ndarray,
    x_next: np.ndarray,
    g_prev: np.ndarray,
    streams: StreamFactory,
    replications: int,
) -> dict[str, float]:
    """Empirical G_{k+1} against (1−p)G_k + (1−p)L²α‖Δx‖² + θ for a fixed (x_k, x_{k+1}, g_k)."""
    estimator = build_estimator(spec, problem)
    constants = estimator.constants()
    n, d = problem.n, problem.d
    state = EstimatorState.from_devices(np.broadcast_to(g_prev, (replications, n, d)).copy())
    prev = np.broadcast_to(x_prev, (replications, d))
    nxt = np.broadcast_to(x_next, (replications, d))
    updated = estimator.update(state, prev, nxt, streams, iteration=1)
    empirical = float(np.mean(estimator.error(updated, nxt)))
    G_prev = float(np.sum((g_prev - problem.grad_mean(x_prev)) ** 2))
    step_sq = float(np.sum((x_next - x_prev) ** 2))
    p, L = constants.p, problem.constants.L
    bound = (1 - p) * G_prev + (1 - p) * L**2 * constants.alpha * step_sq + constants.theta
    return {"empirical": empirical, "bound": bound}


def estimator_checks(sizes: SuiteSizes, streams: StreamFactory) -> list[Check]:
    rng = streams(Purpose.CHECK, 20, 1)
    n, d = 4, 8
    randk = CompressorSpec(CompressorKind.RAND_K, k=2)
    cases = [
        (make_quadratic(n, d, rng, diagonal=False), EstimatorSpec(EstimatorKind.VANILLA, randk, p=0.3)),
        (
            make_quadratic(n, d, rng, samples_per_device=6, diagonal=False),
            EstimatorSpec(EstimatorKind.FINITE_SUM, randk, p=0.3, minibatch=2),
        ),
        (make_streaming(n, d, rng, sigma=1.0), EstimatorSpec(EstimatorKind.ONLINE, randk, p=0.3, batch=4, minibatch=2)),
    ]
    checks = []
    for index, (problem, spec) in enumerate(cases):
        worst = 0.0
        for point in range(5):
            x_prev = rng.normal(size=d)
            x_next = x_prev + 0.3 * rng.normal(size=d)
            g_prev = problem.grad_mean(x_prev) + 0.1 * rng.normal(size=d)
            replica_streams = StreamFactory(streams.derive_seed(Purpose.CHECK, 100 * index + point))
            gap = recursion_gap(problem, spec, x_prev, x_next, g_prev, replica_streams, sizes.replications)
            worst = max(worst, gap["empirical"] / gap["bound"])
        checks.append(Check(f"{spec.kind.value}.variance_recursion", worst <= 1.05, {"max_ratio": worst}))

    problem = make_quadratic(3, 5, rng)
    identity = EstimatorSpec(EstimatorKind.VANILLA, CompressorSpec(CompressorKind.IDENTITY), p=0.2)
    run = RunSpec(Mode.OPTIMIZE, h=0.02, K=100, chains=4, init_mean=1.0, init_std=1.0)
    trajectory = marina_run(problem, identity, run)
    worst_error = float(np.max(trajectory.estimator_error))
    checks.append(Check("vanilla_identity.exact_gradients", worst_error <= 1e-12, {"max_error": worst_error}))
    return checks


# ── dynamics ────────────────────────────────────────────────────────


def dynamics_checks(sizes: SuiteSizes, streams: StreamFactory) -> list[Check]:
    rng = streams(Purpose.CHECK, 30, 1)
    checks = []

    problem = make_quadratic(2, 3, rng)
    identity = EstimatorSpec(EstimatorKind.VANILLA, CompressorSpec(CompressorKind.IDENTITY), p=1.0)
    run = RunSpec(Mode.SAMPLE, h=0.05, K=100, chains=8, seed=7, init_std=1.0, snapshots=(1, 50, 100))
    marina = langevin_marina_run(problem, identity, run)
    plain = langevin_run(problem, run)
    diff = max(float(np.max(np.abs(marina.snapshots[k] - plain.snapshots[k]))) for k in run.snapshots)
    checks.append(Check("langevin_marina.reduces_to_langevin", diff <= 1e-12, {"max_abs_diff": diff}))

    h = 0.1
    scalar = QuadraticProblem.from_devices(np.ones((1, 1)))
    rho0 = GaussianSummary(np.array([2.0]), np.array([0.25]))
    run = RunSpec(Mode.SAMPLE, h=h, K=400, chains=sizes.chains, seed=11, init_mean=2.0, init_std=0.5)
    trajectory = langevin_run(scalar, run)
    laws = gaussian_langevin_law(scalar, h, rho0, run.K)
    worst_z = 0.0
    for k in (1, 10, 100):
        law = laws[k]
        var = float(law.variances[0])
        se_mean = math.sqrt(var / run.chains)
        se_var = var * math.sqrt(2.0 / (run.chains - 1))
        worst_z = max(
            worst_z,
            abs(trajectory.chain_mean[k, 0] - law.mean[0]) / se_mean,
            abs(trajectory.chain_var[k, 0] - var) / se_var,
        )
    checks.append(Check("langevin.gaussian_transient", worst_z <= 4.0, {"max_z": worst_z}))
    stationary = float(np.mean(trajectory.chain_var[-100:, 0]))
    expected = 1.0 / (1.0 - h / 2)
    rel = abs(stationary - expected) / expected
    checks.append(Check("langevin.stationary_variance", rel <= 0.02, {"variance": stationary, "expected": expected}))

    d = 100
    wide = make_quadratic(1, d, rng)
    spec = EstimatorSpec(EstimatorKind.VANILLA, CompressorSpec(CompressorKind.RAND_K, k=10), p=0.1)
    run = RunSpec(Mode.SAMPLE, h=1e-3, K=50, seed=3)
    plain_noise = langevin_marina_run(wide, spec, run)
    shared = langevin_marina_run(wide, spec, RunSpec(Mode.SAMPLE, h=1e-3, K=50, seed=3, shared_noise_seed=True))
    uplink = plain_noise.uplink[1:, 0]
    expected_uplink = np.where(plain_noise.refresh[1:, 0], 6400, 960)
    checks.append(
        Check(
            "accounting.rounds",
            bool(np.array_equal(uplink, expected_uplink))
            and int(plain_noise.cum_bits[-1]) == int(np.sum(plain_noise.round_bits))
            and bool(np.all(plain_noise.downlink[1:] - shared.downlink[1:] == 6400)),
            {"cum_bits": int(plain_noise.cum_bits[-1])},
        )
    )
    return checks


# ── metrics ─────────────────────────────────────────────────────────


def metric_checks(sizes: SuiteSizes, streams: StreamFactory) -> list[Check]:
    rng = streams(Purpose.CHECK, 40, 1)
    worst_pinsker = -math.inf
    worst_talagrand = -math.inf
    for _ in range(50):
        target = GaussianSummary(rng.normal(size=1), rng.uniform(0.3, 3.0, size=1))
        other = GaussianSummary(rng.normal(size=1), rng.uniform(0.3, 3.0, size=1))
        kl = kl_gaussian(other, target)
        mu = 1.0 / float(target.variances[0])
        worst_pinsker = max(worst_pinsker, tv_gaussian_1d(other, target) - math.sqrt(kl / 2))
        worst_talagrand = max(worst_talagrand, w2_gaussian(other, target) ** 2 - 2.0 / mu * kl)
    return [
        Check("pinsker", worst_pinsker <= 1e-10, {"max_excess": worst_pinsker}),
        Check("talagrand", worst_talagrand <= 1e-10, {"max_excess": worst_talagrand}),
    ]


SUITES: dict[str, Callable[[SuiteSizes, StreamFactory], list[Check]]] = {
    "compression": compression_checks,
    "estimators": estimator_checks,
    "dynamics": dynamics_checks,
    "metrics": metric_checks,
}


def run_suite(*, quick: bool = False, seed: int = 0) -> ValidationReport:
    sizes = SuiteSizes.quick() if quick else SuiteSizes()
    streams = StreamFactory(seed)
    report = ValidationReport()
    for name, suite in SUITES.items():
        try:
            checks = suite(sizes, streams)
        except Exception as exc:
            logger.exception("Suite %s raised", name)
            checks = [Check(f"{name}.error", False, {"error": repr(exc)})]
        for check in checks:
            logger.info("%-45s %s", check.name, "ok" if check.passed else "FAILED")
        report.checks.extend(checks)
    return report
