"""Closed-form distances between Gaussian laws, and the moment-matched chain proxy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg
from scipy.stats import norm


@dataclass(frozen=True)
class GaussianSummary:
    """Gaussian law given by its mean and a diagonal (1-D) or full (2-D) covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.asarray(self.covariance, dtype=np.float64)
        d = mean.shape[0]
        if cov.ndim == 0:
            cov = np.full(d, float(cov))
        if cov.shape not in ((d,), (d, d)):
            raise ValueError(f"Covariance shape {cov.shape} does not match mean of dimension {d}")
        if cov.ndim == 1 and np.any(cov < 0):
            raise ValueError("Diagonal covariance must be nonnegative")
        if cov.ndim == 2 and not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("Covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def is_diagonal(self) -> bool:
        cov = self.covariance
        return cov.ndim == 1 or bool(np.count_nonzero(cov - np.diag(np.diag(cov))) == 0)

    @property
    def variances(self) -> np.ndarray:
        return self.covariance if self.covariance.ndim == 1 else np.diag(self.covariance).copy()

    @property
    def full(self) -> np.ndarray:
        return np.diag(self.covariance) if self.covariance.ndim == 1 else self.covariance

    def diagonal(self) -> GaussianSummary:
        return GaussianSummary(self.mean, self.variances)


def _check_dims(a: GaussianSummary, b: GaussianSummary) -> None:
    if a.dim != b.dim:
        raise ValueError(f"Dimension mismatch: {a.dim} vs {b.dim}")


def kl_gaussian(a: GaussianSummary, b: GaussianSummary) -> float:
    """KL(a ‖ b); infinite when ``a`` is degenerate."""
    _check_dims(a, b)
    try:
        chol_b = linalg.cho_factor(b.full, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("Reference covariance is singular") from exc
    sign_a, logdet_a = np.linalg.slogdet(a.full)
    if sign_a <= 0:
        return math.inf
    logdet_b = 2.0 * float(np.sum(np.log(np.diag(chol_b[0]))))
    diff = b.mean - a.mean
    trace = float(np.trace(linalg.cho_solve(chol_b, a.full)))
    maha = float(diff @ linalg.cho_solve(chol_b, diff))
    kl = 0.5 * (trace + maha - a.dim + logdet_b - logdet_a)
    return max(kl, 0.0)


def w2_gaussian(a: GaussianSummary, b: GaussianSummary) -> float:
    """W2 between Gaussians with diagonal covariances."""
    _check_dims(a, b)
    if not (a.is_diagonal and b.is_diagonal):
        raise ValueError("w2_gaussian requires diagonal covariances")
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    std_term = float(np.sum((np.sqrt(a.variances) - np.sqrt(b.variances)) ** 2))
    return math.sqrt(mean_term + std_term)


def w2_sq_moment(summary: GaussianSummary, target: GaussianSummary) -> float:
    """Squared W2 between a moment-matched chain summary and the diagonal of the target."""
    return w2_gaussian(summary.diagonal(), target.diagonal()) ** 2


def fisher_gaussian(a: GaussianSummary, target: GaussianSummary) -> float:
    """Relative Fisher information ∫‖∇log(a/π)‖² da for diagonal Gaussians."""
    _check_dims(a, target)
    if not (a.is_diagonal and target.is_diagonal):
        raise ValueError("fisher_gaussian requires diagonal covariances")
    va, vb = a.variances, target.variances
    if np.any(va <= 0) or np.any(vb <= 0):
        raise ValueError("fisher_gaussian requires positive definite covariances")
    # x = m_a + z: ∇log(a/π) = (1/vb − 1/va) z + (m_a − m_b)/vb
    spread = float(np.sum((1.0 / vb - 1.0 / va) ** 2 * va))
    shift = float(np.sum((a.mean - target.mean) ** 2 / vb**2))
    return spread + shift


def tv_gaussian_1d(a: GaussianSummary, b: GaussianSummary) -> float:
    """TV distance between two 1-D Gaussians by numeric quadrature."""
    if a.dim != 1 or b.dim != 1:
        raise ValueError("tv_gaussian_1d handles one-dimensional laws only")
    sa, sb = math.sqrt(a.variances[0]), math.sqrt(b.variances[0])
    if sa <= 0 or sb <= 0:
        raise ValueError("tv_gaussian_1d requires positive variances")
    ma, mb = float(a.mean[0]), float(b.mean[0])
    lo = min(ma - 12 * sa, mb - 12 * sb)
    hi = max(ma + 12 * sa, mb + 12 * sb)
    points = sorted({ma, mb})
    value, _ = integrate.quad(
        lambda t: abs(norm.pdf(t, ma, sa) - norm.pdf(t, mb, sb)),
        lo,
        hi,
        points=points,
        limit=200,
        epsabs=1e-13,
    )
    return 0.5 * value


def moment_summary(chains: np.ndarray) -> GaussianSummary:
    """Sample mean and diagonal sample covariance across chains ``(R, d)``."""
    chains = np.asarray(chains, dtype=np.float64)
    if chains.ndim == 1:
        chains = chains[:, None]
    if chains.shape[0] < 2:
        raise ValueError(f"Need at least 2 chains for a moment summary, got {chains.shape[0]}")
    return GaussianSummary(chains.mean(axis=0), chains.var(axis=0, ddof=1))
