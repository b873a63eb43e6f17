"""Step-size caps and the convergence envelopes of the federated optimisers and samplers.

All constants refer to the device-average objective F̄ = F/n: ``L`` and ``mu``
are its smoothness and PL/LSI constants, ``f0`` and ``f_star`` its values at
x_0 and at the minimiser.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.metrics import GaussianSummary, kl_gaussian
from src.targets import Problem, ProblemKindError
from src.targets.quadratic import QuadraticProblem

logger = logging.getLogger(__name__)


class TheoryError(ValueError):
    """A bound cannot be evaluated: missing inputs or a step size outside the admissible range."""


class StepSizeCapError(RuntimeError):
    """Step size exceeds the theoretical cap while enforcement is on."""


class BoundKind(Enum):
    KL = "kl"
    TV2 = "tv2"
    W22 = "w22"
    OPT_AVG_GRAD = "opt_avg_grad"
    OPT_PL = "opt_pl"


SAMPLING_BOUNDS = (BoundKind.KL, BoundKind.TV2, BoundKind.W22)
OPTIMIZATION_BOUNDS = (BoundKind.OPT_AVG_GRAD, BoundKind.OPT_PL)


# ── step-size caps ──────────────────────────────────────────────────


def _check_cap_inputs(L: float, p: float, alpha: float, mu: float | None = None) -> None:
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if mu is not None and mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")


def step_cap_opt(L: float, p: float, alpha: float) -> float:
    _check_cap_inputs(L, p, alpha)
    return math.sqrt(p / (1 + alpha)) / (10 * L)


def step_cap_opt_pl(L: float, p: float, alpha: float, mu: float) -> float:
    _check_cap_inputs(L, p, alpha, mu)
    return min(math.sqrt(p / (1 + alpha)) / (14 * L), p / (6 * mu))


def step_cap_sampling(L: float, p: float, alpha: float, mu: float) -> float:
    return step_cap_opt_pl(L, p, alpha, mu)


def check_step_size(h: float, cap: float | None, enforce: bool) -> bool:
    """True when ``h`` is within ``cap``; otherwise warn, or raise under enforcement."""
    if h <= 0:
        raise ValueError(f"Step size must be positive, got {h}")
    if cap is None or h <= cap * (1 + 1e-12):
        return True
    if enforce:
        raise StepSizeCapError(f"Step size h={h:.6g} exceeds the cap {cap:.6g}")
    logger.warning("Step size h=%.6g exceeds the theoretical cap %.6g; bounds do not apply", h, cap)
    return False


# ── bound constants ─────────────────────────────────────────────────


@dataclass(frozen=True)
class TheoryParams:
    L: float
    d: int
    h: float
    p: float
    alpha: float
    theta: float
    G0: float
    mu_lsi: float | None = None
    mu_pl: float | None = None
    f0: float | None = None
    f_star: float | None = None
    kl0: float | None = None
    batch: int = 1

    def coupling(self, beta: float) -> float:
        """C for a given β; raises when the denominator is not positive."""
        Lh_sq = (self.L * self.h) ** 2
        denominator = 1 - (1 - self.p) * (4 * Lh_sq * self.alpha + 1) * beta
        if denominator <= 0:
            raise TheoryError(f"C is undefined for h={self.h:.6g}, p={self.p:.6g}, beta={beta:.6g}: denominator {denominator:.3g}")
        return (8 * Lh_sq * beta + 2 * beta) / denominator

    def _mu(self, name: str) -> float:
        mu = getattr(self, name)
        if mu is None or mu <= 0:
            raise TheoryError(f"Bound needs a positive {name}")
        return mu

    @property
    def beta(self) -> float:
        return math.exp(self._mu("mu_lsi") * self.h)

    @property
    def C(self) -> float:
        return self.coupling(self.beta)

    @property
    def C_unit(self) -> float:
        """C with β = 1, used by the average-gradient bound."""
        return self.coupling(1.0)

    @property
    def C_pl(self) -> float:
        return self.coupling(math.exp(self._mu("mu_pl") * self.h))

    def _tau(self, C: float) -> float:
        L, h, d = self.L, self.h, self.d
        return (2 * L**2 + C * (1 - self.p) * L**2 * self.alpha) * (8 * L * h**2 * d + 4 * d * h) + C * self.theta

    @property
    def tau(self) -> float:
        return self._tau(self.C)

    def _f0(self) -> float:
        if self.f0 is None:
            raise TheoryError("Bound needs F(x_0)")
        return self.f0

    def _f_star(self) -> float:
        if self.f_star is None:
            raise TheoryError("Bound needs F*")
        return self.f_star

    @property
    def psi1(self) -> float:
        return self._f0() + self.h * self.C_unit * self.G0

    @property
    def psi2(self) -> float:
        mu = self._mu("mu_pl")
        return self._f0() + (1 - math.exp(-mu * self.h)) / mu * self.C_pl * self.G0

    @property
    def psi3(self) -> float:
        mu = self._mu("mu_lsi")
        if self.kl0 is None:
            raise TheoryError("Bound needs KL(rho_0 | pi), unavailable without a normalised target")
        return self.kl0 + (1 - math.exp(-mu * self.h)) / mu * self.C * self.G0

    def summary(self) -> dict[str, float | None]:
        """Every derivable constant, None where inputs are missing."""
        out: dict[str, float | None] = {}
        for name in ("beta", "C", "C_unit", "C_pl", "tau", "psi1", "psi2", "psi3"):
            try:
                out[name] = float(getattr(self, name))
            except TheoryError:
                out[name] = None
        return out


def theory_params(
    problem: Problem,
    *,
    h: float,
    p: float,
    alpha: float,
    theta: float,
    G0: float,
    x0: np.ndarray | None = None,
    rho0: GaussianSummary | None = None,
    batch: int = 1,
) -> TheoryParams:
    """Collect the bound inputs from a problem's declared constants.

    ``f0`` is E_{ρ₀}[F̄] when ``rho0`` is given and F̄(x0) otherwise; ``rho0``
    also gives KL(ρ₀‖π̄) when the target is Gaussian.
    """
    constants = problem.constants
    f0 = None
    if rho0 is not None:
        f0 = problem.expected_mean_value(rho0)
    elif x0 is not None:
        f0 = float(problem.mean_value(np.asarray(x0, dtype=np.float64)))
    kl0 = None
    target = problem.target_gaussian()
    if rho0 is not None and target is not None:
        kl0 = kl_gaussian(rho0, target)
    return TheoryParams(
        L=constants.L,
        d=problem.d,
        h=h,
        p=p,
        alpha=alpha,
        theta=theta,
        G0=G0,
        mu_lsi=constants.mu_lsi,
        mu_pl=constants.mu_pl,
        f0=f0,
        f_star=constants.f_star,
        kl0=kl0,
        batch=batch,
    )


# ── envelopes ───────────────────────────────────────────────────────


def _sampling_scale(kind: BoundKind, mu: float) -> float:
    match kind:
        case BoundKind.TV2:
            return 0.5
        case BoundKind.W22:
            return 2.0 / mu
    return 1.0


def theory_bound(kind: BoundKind, params: TheoryParams, k: int | np.ndarray) -> float | np.ndarray:
    """Envelope at iteration ``k`` (scalar or array)."""
    k = np.asarray(k, dtype=np.float64)
    h = params.h
    if kind in SAMPLING_BOUNDS:
        mu = params._mu("mu_lsi")
        kl = np.exp(-mu * k * h) * params.psi3 + (1 - np.exp(-k * mu * h)) / mu * params.tau
        value = _sampling_scale(kind, mu) * kl
    elif kind is BoundKind.OPT_AVG_GRAD:
        gap = params.psi1 - params._f_star()
        value = np.where(k > 0, 2 * gap / (np.maximum(k, 1) * h), np.inf) + 2 * params.C_unit * params.theta
    elif kind is BoundKind.OPT_PL:
        mu = params._mu("mu_pl")
        value = np.exp(-mu * k * h) * (params.psi2 - params._f_star())
        value = value + (1 - np.exp(-k * mu * h)) / mu * params.C_pl * params.theta
    else:
        raise ValueError(f"Unknown bound kind {kind}")
    return float(value) if value.ndim == 0 else value


def theory_floor(kind: BoundKind, params: TheoryParams, k: int | np.ndarray) -> float | np.ndarray:
    """Nonvanishing part of the envelope; needs neither KL(ρ₀) nor F(x_0)."""
    k = np.asarray(k, dtype=np.float64)
    h = params.h
    if kind in SAMPLING_BOUNDS:
        mu = params._mu("mu_lsi")
        value = _sampling_scale(kind, mu) * (1 - np.exp(-k * mu * h)) / mu * params.tau
    elif kind is BoundKind.OPT_AVG_GRAD:
        value = np.full_like(k, 2 * params.C_unit * params.theta)
    elif kind is BoundKind.OPT_PL:
        mu = params._mu("mu_pl")
        value = (1 - np.exp(-k * mu * h)) / mu * params.C_pl * params.theta
    else:
        raise ValueError(f"Unknown bound kind {kind}")
    return float(value) if value.ndim == 0 else value


def batch_for_residual(params: TheoryParams, eps: float, kind: BoundKind) -> int:
    """Smallest refresh batch b whose K → ∞ noise residual is at most ``eps``.

    θ scales as 1/b, so ``params.theta * params.batch`` is the batch-free noise level.
    """
    if eps <= 0:
        raise ValueError(f"Residual target must be positive, got {eps}")
    noise = params.theta * params.batch
    if noise == 0:
        return 1
    match kind:
        case BoundKind.OPT_AVG_GRAD:
            needed = 2 * params.C_unit * noise / eps
        case BoundKind.OPT_PL:
            mu = params._mu("mu_pl")
            needed = params.C_pl * noise / (mu * eps)
        case _:
            mu = params._mu("mu_lsi")
            needed = _sampling_scale(kind, mu) * params.C * noise / (mu * eps)
    return max(1, math.ceil(needed - 1e-12))


# ── exact law of plain Langevin on quadratics ───────────────────────


def gaussian_langevin_law(
    problem: Problem,
    h: float,
    rho0: GaussianSummary,
    k_max: int,
) -> list[GaussianSummary]:
    """Laws of x_0..x_{k_max} for x_{k+1} = x_k − h∇F̄(x_k) + √(2h) Z started from a Gaussian ρ₀."""
    if not isinstance(problem, QuadraticProblem):
        raise ProblemKindError(f"Exact Langevin laws need a quadratic problem, got {problem.kind.value}")
    A = problem.device_matrices.mean(axis=0)
    b = problem.device_vectors.mean(axis=0)
    M = np.eye(problem.d) - h * A
    mean, cov = rho0.mean.copy(), rho0.full.copy()
    laws = [GaussianSummary(mean, cov)]
    for _ in range(k_max):
        mean = M @ mean + h * b
        cov = M @ cov @ M.T + 2 * h * np.eye(problem.d)
        cov = 0.5 * (cov + cov.T)
        laws.append(GaussianSummary(mean, cov))
    return laws
