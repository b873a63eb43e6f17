from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.compression import BitAccounting, Compressor, CompressorSpec, build_compressor, encoded_bits
from src.streams import SERVER, Purpose, StreamFactory, device_party
from src.targets import Problem, ProblemKindError

logger = logging.getLogger(__name__)


class EstimatorKind(Enum):
    VANILLA = "vanilla"
    FINITE_SUM = "finite_sum"
    ONLINE = "online"


class CoinScope(Enum):
    SHARED = "shared"
    PER_DEVICE = "per_device"


@dataclass(frozen=True)
class EstimatorSpec:
    kind: EstimatorKind
    compressor: CompressorSpec
    p: float
    minibatch: int = 1
    batch: int = 1
    coin_scope: CoinScope = CoinScope.SHARED

    def __post_init__(self) -> None:
        if not 0 < self.p <= 1:
            raise ValueError(f"Refresh probability must lie in (0, 1], got {self.p}")
        if self.minibatch < 1 or self.batch < 1:
            raise ValueError(f"Batch sizes must be >= 1, got b={self.batch}, b'={self.minibatch}")


@dataclass(frozen=True)
class EstimatorState:
    """Estimator memory for ``R`` chains.

    ``g_devices`` is ``(R, n, d)`` and ``g`` its device mean ``(R, d)``.
    ``refreshed`` flags the devices that took the full-gradient branch in the
    round that produced this state; ``uplink_bits`` is that round's upload per chain.
    """

    g_devices: np.ndarray
    g: np.ndarray
    refreshed: np.ndarray
    uplink_bits: np.ndarray

    @classmethod
    def from_devices(
        cls,
        g_devices: np.ndarray,
        refreshed: np.ndarray | None = None,
        uplink_bits: np.ndarray | None = None,
    ) -> EstimatorState:
        g_devices = np.asarray(g_devices, dtype=np.float64)
        if g_devices.ndim != 3:
            raise ValueError(f"Expected device estimates of shape (R, n, d), got {g_devices.shape}")
        chains, n = g_devices.shape[:2]
        return cls(
            g_devices=g_devices,
            g=g_devices.mean(axis=1),
            refreshed=np.ones((chains, n), dtype=bool) if refreshed is None else refreshed,
            uplink_bits=np.zeros(chains, dtype=np.int64) if uplink_bits is None else uplink_bits,
        )

    @property
    def chains(self) -> int:
        return self.g.shape[0]

    @property
    def refresh_round(self) -> np.ndarray:
        """Per chain: every device took the full branch."""
        return np.all(self.refreshed, axis=1)


@dataclass(frozen=True)
class MarinaConstants:
    alpha: float
    theta: float
    p: float


def default_p(kind: EstimatorKind, compressor: Compressor, *, N: int | None = None, batch: int = 1, minibatch: int = 1) -> float:
    """Refresh probability balancing the cost of full and compressed rounds."""
    p = compressor.zeta / compressor.dim
    match kind:
        case EstimatorKind.FINITE_SUM:
            if N is None:
                raise ValueError("finite_sum default p needs the number of samples per device")
            p = min(p, minibatch / (N + minibatch))
        case EstimatorKind.ONLINE:
            p = min(p, minibatch / (batch + minibatch))
    return float(min(max(p, np.finfo(float).tiny), 1.0))


class MarinaEstimator(ABC):
    """Device-side gradient estimator with a random full/compressed branch per round."""

    kind: EstimatorKind

    def __init__(self, spec: EstimatorSpec, problem: Problem, accounting: BitAccounting | None = None) -> None:
        if spec.kind is not self.kind:
            raise ValueError(f"{type(self).__name__} cannot run a {spec.kind.value} spec")
        self._check_problem(problem)
        self.spec = spec
        self.problem = problem
        self.compressor = build_compressor(spec.compressor, problem.d)
        self.accounting = accounting or BitAccounting()

    @abstractmethod
    def _check_problem(self, problem: Problem) -> None:
        """Raise ProblemKindError when the problem lacks the oracles this variant needs."""

    @abstractmethod
    def _initial(self, i: int, x0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """g_0^i for all chains."""

    @abstractmethod
    def _refresh(self, i: int, x_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Full-branch estimate of ∇F_i(x_{k+1})."""

    @abstractmethod
    def _difference(self, i: int, x_prev: np.ndarray, x_next: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Quantity compressed on the cheap branch, unbiased for ∇F_i(x_{k+1}) − ∇F_i(x_k)."""

    @abstractmethod
    def constants(self) -> MarinaConstants:
        """α and θ of the variance recursion."""

    @abstractmethod
    def initial_error(self) -> float:
        """G_0 = E‖g_0 − ∇F̄(x_0)‖²."""

    # ── protocol ────────────────────────────────────────────────────

    def _points(self, x: np.ndarray) -> np.ndarray:
        x = self.problem._point(x)
        return x[None] if x.ndim == 1 else x

    def init(self, x0: np.ndarray, streams: StreamFactory) -> EstimatorState:
        x0 = self._points(x0)
        g_devices = np.stack(
            [self._initial(i, x0, streams(Purpose.INIT, device_party(i))) for i in range(self.problem.n)],
            axis=1,
        )
        dense = self.accounting.dense(self.problem.d)
        uplink = np.full(x0.shape[0], self.problem.n * dense, dtype=np.int64)
        return EstimatorState.from_devices(g_devices, uplink_bits=uplink)

    def draw_coins(self, chains: int, streams: StreamFactory, iteration: int) -> np.ndarray:
        """Refresh coins ``(R, n)`` for round ``iteration``."""
        n, p = self.problem.n, self.spec.p
        if self.spec.coin_scope is CoinScope.SHARED:
            shared = streams(Purpose.COIN, SERVER, iteration).random(chains) < p
            return np.repeat(shared[:, None], n, axis=1)
        return np.stack(
            [streams(Purpose.COIN, device_party(i), iteration).random(chains) < p for i in range(n)],
            axis=1,
        )

    def update(
        self,
        state: EstimatorState,
        x_prev: np.ndarray,
        x_next: np.ndarray,
        streams: StreamFactory,
        iteration: int,
    ) -> EstimatorState:
        """One round: every device uploads g_{k+1}^i; returns a new state."""
        x_prev, x_next = self._points(x_prev), self._points(x_next)
        if x_prev.shape != x_next.shape or x_next.shape[0] != state.chains:
            raise ValueError(f"Point shapes {x_prev.shape}, {x_next.shape} do not match {state.chains} chains")
        coins = self.draw_coins(state.chains, streams, iteration)
        dense = self.accounting.dense(self.problem.d)
        g_devices = np.empty_like(state.g_devices)
        uplink = np.zeros(state.chains, dtype=np.int64)
        for i in range(self.problem.n):
            party = device_party(i)
            refresh = self._refresh(i, x_next, streams(Purpose.REFRESH, party, iteration))
            diff = self._difference(i, x_prev, x_next, streams(Purpose.MINIBATCH, party, iteration))
            message = self.compressor.compress(diff, streams(Purpose.COMPRESS, party, iteration))
            cheap = state.g + message.decode()
            g_devices[:, i] = np.where(coins[:, i, None], refresh, cheap)
            uplink += np.where(coins[:, i], dense, encoded_bits(message, self.accounting))
        return EstimatorState.from_devices(g_devices, refreshed=coins, uplink_bits=uplink)

    def error(self, state: EstimatorState, x: np.ndarray) -> np.ndarray:
        """Per-chain ‖g − ∇F̄(x)‖²."""
        return np.sum((state.g - self.problem.grad_mean(self._points(x))) ** 2, axis=-1)

    def estimate_initial_error(self, x0: np.ndarray, streams: StreamFactory, replications: int = 10_000) -> float:
        """Monte-Carlo cross-check of :meth:`initial_error` at a single point."""
        x0 = np.broadcast_to(np.asarray(x0, dtype=np.float64), (replications, self.problem.d))
        return float(np.mean(self.error(self.init(x0, streams), x0)))

    def _smoothness_ratio(self, per_device: tuple[float, ...] | list[float]) -> float:
        n, L = self.problem.n, self.problem.constants.L
        if L <= 0:
            raise ValueError("Smoothness constant L must be positive for the variance constants")
        return float(np.sum(np.square(per_device))) / (n**2 * L**2)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(p={self.spec.p:.4g}, compressor={self.compressor!r})"


def require_kind(problem: Problem, allowed: tuple[object, ...], variant: str) -> None:
    if problem.kind not in allowed:
        raise ProblemKindError(f"{variant} estimator cannot run on a {problem.kind.value} problem")
