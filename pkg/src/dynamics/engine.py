from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.compression import BitAccounting
from src.dynamics.theory import check_step_size, step_cap_opt, step_cap_sampling
from src.estimators import EstimatorSpec, EstimatorState, MarinaEstimator, build_estimator
from src.metrics import GaussianSummary
from src.streams import SERVER, Purpose, StreamFactory
from src.targets import Problem

logger = logging.getLogger(__name__)


class Mode(Enum):
    OPTIMIZE = "optimize"
    SAMPLE = "sample"


class Algorithm(Enum):
    MARINA = "marina"
    LANGEVIN_MARINA = "langevin_marina"
    LANGEVIN = "langevin"


@dataclass(frozen=True)
class RunSpec:
    """One run of ``chains`` independent replicas started from ρ₀ = N(init_mean, init_std² I).

    ``snapshots`` lists iterations whose full chain states are kept. Iterates
    with k ≥ ``sample_from`` and (k − sample_from) divisible by ``sample_every``
    are pooled for histogram metrics.
    """

    mode: Mode
    h: float
    K: int
    chains: int = 1
    seed: int = 0
    shared_noise_seed: bool = False
    enforce_cap: bool = False
    init_mean: tuple[float, ...] | float = 0.0
    init_std: float = 0.0
    snapshots: tuple[int, ...] = ()
    sample_from: int | None = None
    sample_every: int = 1

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise ValueError(f"Step size must be positive, got {self.h}")
        if self.K < 1 or self.chains < 1:
            raise ValueError(f"Need K >= 1 and chains >= 1, got K={self.K}, chains={self.chains}")
        if self.init_std < 0:
            raise ValueError(f"init_std must be nonnegative, got {self.init_std}")
        if self.sample_every < 1:
            raise ValueError(f"sample_every must be >= 1, got {self.sample_every}")

    def initial_law(self, d: int) -> GaussianSummary:
        mean = np.broadcast_to(np.asarray(self.init_mean, dtype=np.float64), (d,))
        return GaussianSummary(mean.copy(), np.full(d, self.init_std**2))

    def initial_points(self, d: int, streams: StreamFactory) -> np.ndarray:
        law = self.initial_law(d)
        noise = streams(Purpose.INIT, SERVER).standard_normal((self.chains, d))
        return law.mean + self.init_std * noise

    def pools(self, k: int) -> bool:
        return self.sample_from is not None and k >= self.sample_from and (k - self.sample_from) % self.sample_every == 0


@dataclass
class Trajectory:
    """Per-iteration records of a run, rows k = 0..K.

    Chain-averaged quantities are ``objective`` (F̄(x_k)), ``grad_norm_sq``
    (‖∇F̄(x_k)‖²) and ``estimator_error`` (‖g_k − ∇F̄(x_k)‖²); ``chain_mean`` and
    ``chain_var`` are the across-chain moments. ``uplink`` and ``refresh`` are
    per chain; ``downlink`` is a broadcast and the same for every chain.
    """

    algorithm: Algorithm
    objective: np.ndarray
    grad_norm_sq: np.ndarray
    estimator_error: np.ndarray
    chain_mean: np.ndarray
    chain_var: np.ndarray
    uplink: np.ndarray
    downlink: np.ndarray
    refresh: np.ndarray
    final: np.ndarray
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    pooled: np.ndarray | None = None

    @property
    def K(self) -> int:
        return len(self.objective) - 1

    @property
    def round_bits(self) -> np.ndarray:
        """Bits per round for the reference chain 0."""
        return self.uplink[:, 0] + self.downlink

    @property
    def cum_bits(self) -> np.ndarray:
        return np.cumsum(self.round_bits)

    def moments(self, k: int) -> GaussianSummary:
        return GaussianSummary(self.chain_mean[k], self.chain_var[k])


class _Recorder:
    def __init__(self, problem: Problem, run: RunSpec, algorithm: Algorithm) -> None:
        rows = run.K + 1
        d, chains = problem.d, run.chains
        self.problem = problem
        self.run = run
        self.algorithm = algorithm
        self.objective = np.empty(rows)
        self.grad_norm_sq = np.empty(rows)
        self.estimator_error = np.empty(rows)
        self.chain_mean = np.empty((rows, d))
        self.chain_var = np.zeros((rows, d))
        self.uplink = np.zeros((rows, chains), dtype=np.int64)
        self.downlink = np.zeros(rows, dtype=np.int64)
        self.refresh = np.zeros((rows, chains), dtype=bool)
        self.snapshots: dict[int, np.ndarray] = {}
        self.pooled: list[np.ndarray] = []

    def record(self, k: int, x: np.ndarray, g: np.ndarray, uplink: np.ndarray, downlink: int, refresh: np.ndarray) -> None:
        grad = self.problem.grad_mean(x)
        self.objective[k] = float(np.mean(self.problem.mean_value(x)))
        self.grad_norm_sq[k] = float(np.mean(np.sum(grad**2, axis=-1)))
        self.estimator_error[k] = float(np.mean(np.sum((g - grad) ** 2, axis=-1)))
        self.chain_mean[k] = x.mean(axis=0)
        if x.shape[0] > 1:
            self.chain_var[k] = x.var(axis=0, ddof=1)
        self.uplink[k] = uplink
        self.downlink[k] = downlink
        self.refresh[k] = refresh
        if k in self.run.snapshots:
            self.snapshots[k] = x.copy()
        if self.run.pools(k):
            self.pooled.append(x.copy())
        if k % max(1, self.run.K // 10) == 0:
            logger.debug(
                "%s k=%d objective=%.6g grad_norm_sq=%.6g bits=%d",
                self.algorithm.value,
                k,
                self.objective[k],
                self.grad_norm_sq[k],
                int(uplink[0]) + downlink,
            )

    def finish(self, x: np.ndarray) -> Trajectory:
        return Trajectory(
            algorithm=self.algorithm,
            objective=self.objective,
            grad_norm_sq=self.grad_norm_sq,
            estimator_error=self.estimator_error,
            chain_mean=self.chain_mean,
            chain_var=self.chain_var,
            uplink=self.uplink,
            downlink=self.downlink,
            refresh=self.refresh,
            final=x,
            snapshots=self.snapshots,
            pooled=np.concatenate(self.pooled) if self.pooled else None,
        )


def applicable_cap(mode: Mode, problem: Problem, estimator: MarinaEstimator) -> float | None:
    """Cap of the average-gradient bound when optimising, of the KL bound when sampling."""
    constants = estimator.constants()
    L = problem.constants.L
    if mode is Mode.OPTIMIZE:
        return step_cap_opt(L, constants.p, constants.alpha)
    mu = problem.constants.mu_lsi
    if mu is None:
        logger.warning("No LSI constant declared for %r; step size cap not checked", problem)
        return None
    return step_cap_sampling(L, constants.p, constants.alpha, mu)


def _marina_loop(
    problem: Problem,
    estimator: MarinaEstimator,
    run: RunSpec,
    algorithm: Algorithm,
) -> Trajectory:
    check_step_size(run.h, applicable_cap(run.mode, problem, estimator), run.enforce_cap)
    streams = StreamFactory(run.seed)
    dense = estimator.accounting.dense(problem.d)
    noisy = algorithm is Algorithm.LANGEVIN_MARINA
    # g_k always; x_{k+1} too for the sampler unless devices regenerate the noise
    downlink = dense if not noisy or run.shared_noise_seed else 2 * dense
    noise_scale = math.sqrt(2 * run.h)

    x = run.initial_points(problem.d, streams)
    state: EstimatorState = estimator.init(x, streams)
    recorder = _Recorder(problem, run, algorithm)
    recorder.record(0, x, state.g, state.uplink_bits, 0, state.refresh_round)
    for k in range(run.K):
        x_next = x - run.h * state.g
        if noisy:
            x_next = x_next + noise_scale * streams(Purpose.NOISE, SERVER, k).standard_normal(x.shape)
        state = estimator.update(state, x, x_next, streams, iteration=k + 1)
        x = x_next
        recorder.record(k + 1, x, state.g, state.uplink_bits, downlink, state.refresh_round)
    return recorder.finish(x)


def marina_run(
    problem: Problem,
    estimator_spec: EstimatorSpec,
    run: RunSpec,
    accounting: BitAccounting | None = None,
) -> Trajectory:
    """Distributed gradient method x_{k+1} = x_k − h g_k."""
    if run.mode is not Mode.OPTIMIZE:
        raise ValueError("marina_run needs an optimize-mode run")
    estimator = build_estimator(estimator_spec, problem, accounting)
    logger.info("MARINA: %r, h=%.6g, K=%d, replications=%d", estimator, run.h, run.K, run.chains)
    return _marina_loop(problem, estimator, run, Algorithm.MARINA)


def langevin_marina_run(
    problem: Problem,
    estimator_spec: EstimatorSpec,
    run: RunSpec,
    accounting: BitAccounting | None = None,
) -> Trajectory:
    """Distributed sampler x_{k+1} = x_k − h g_k + √(2h) Z_{k+1}, noise drawn at the server."""
    if run.mode is not Mode.SAMPLE:
        raise ValueError("langevin_marina_run needs a sample-mode run")
    estimator = build_estimator(estimator_spec, problem, accounting)
    logger.info("Langevin-MARINA: %r, h=%.6g, K=%d, chains=%d", estimator, run.h, run.K, run.chains)
    return _marina_loop(problem, estimator, run, Algorithm.LANGEVIN_MARINA)


def langevin_run(problem: Problem, run: RunSpec, accounting: BitAccounting | None = None) -> Trajectory:
    """Exact-gradient Langevin baseline: devices upload dense gradients, the server broadcasts x_{k+1}."""
    accounting = accounting or BitAccounting()
    streams = StreamFactory(run.seed)
    dense = accounting.dense(problem.d)
    upload = np.full(run.chains, problem.n * dense, dtype=np.int64)
    refreshed = np.ones(run.chains, dtype=bool)
    noise_scale = math.sqrt(2 * run.h)
    logger.info("Langevin: h=%.6g, K=%d, chains=%d", run.h, run.K, run.chains)

    x = run.initial_points(problem.d, streams)
    g = problem.grad_mean(x)
    recorder = _Recorder(problem, run, Algorithm.LANGEVIN)
    recorder.record(0, x, g, upload, 0, refreshed)
    for k in range(run.K):
        x = x - run.h * g + noise_scale * streams(Purpose.NOISE, SERVER, k).standard_normal(x.shape)
        g = problem.grad_mean(x)
        recorder.record(k + 1, x, g, upload, dense, refreshed)
    return recorder.finish(x)
