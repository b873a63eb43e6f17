"""Sample-based distances: 1-D Wasserstein by quantile coupling, histogram TV."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

logger = logging.getLogger(__name__)

Density = Callable[[np.ndarray], np.ndarray]

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(16)
_NODES_2D, _WEIGHTS_2D = np.polynomial.legendre.leggauss(8)


def w2_empirical_1d(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """W2 between two 1-D empirical laws via the sorted (quantile) coupling.

    Unequal sizes are matched by evaluating both empirical quantile functions on
    the midpoint grid of the larger sample.
    """
    a = np.sort(np.ravel(np.asarray(samples_a, dtype=np.float64)))
    b = np.sort(np.ravel(np.asarray(samples_b, dtype=np.float64)))
    if a.size == 0 or b.size == 0:
        raise ValueError("w2_empirical_1d needs nonempty samples")
    if a.size != b.size:
        m = max(a.size, b.size)
        grid = (np.arange(m) + 0.5) / m
        a = np.quantile(a, grid, method="inverted_cdf")
        b = np.quantile(b, grid, method="inverted_cdf")
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class HistogramSpec:
    ranges: tuple[tuple[float, float], ...]
    bins: int = 64

    def __post_init__(self) -> None:
        if not 1 <= len(self.ranges) <= 2:
            raise ValueError(f"Histograms are 1-D or 2-D, got {len(self.ranges)} ranges")
        if self.bins < 1:
            raise ValueError(f"Need at least one bin, got {self.bins}")
        for lo, hi in self.ranges:
            if not hi > lo:
                raise ValueError(f"Empty histogram range [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.ranges)

    def edges(self, axis: int = 0) -> np.ndarray:
        lo, hi = self.ranges[axis]
        return np.linspace(lo, hi, self.bins + 1)


@dataclass(frozen=True)
class Histogram1D:
    lo: float
    hi: float
    bins: int
    counts: np.ndarray
    underflow: int
    overflow: int
    total: int

    def masses(self) -> np.ndarray:
        """Empirical masses ordered (underflow, bins..., overflow)."""
        full = np.concatenate([[self.underflow], self.counts, [self.overflow]])
        return full / self.total


def histogram_1d(samples: np.ndarray, spec: HistogramSpec) -> Histogram1D:
    x = np.ravel(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise ValueError("Cannot histogram an empty sample")
    lo, hi = spec.ranges[0]
    inside = (x >= lo) & (x <= hi)
    counts, _ = np.histogram(x[inside], bins=spec.edges())
    return Histogram1D(
        lo=lo,
        hi=hi,
        bins=spec.bins,
        counts=counts,
        underflow=int(np.count_nonzero(x < lo)),
        overflow=int(np.count_nonzero(x > hi)),
        total=int(x.size),
    )


def _target_masses_1d(density: Density, spec: HistogramSpec) -> np.ndarray:
    edges = spec.edges()
    left, right = edges[:-1, None], edges[1:, None]
    half = 0.5 * (right - left)
    points = (left + right) / 2 + half * _NODES[None, :]
    values = density(points.reshape(-1, 1)).reshape(points.shape)
    inner = np.sum(values * _WEIGHTS[None, :], axis=1) * half[:, 0]
    scalar = lambda t: float(density(np.array([[t]]))[0])  # noqa: E731
    below, _ = integrate.quad(scalar, -np.inf, edges[0])
    above, _ = integrate.quad(scalar, edges[-1], np.inf)
    return np.concatenate([[below], inner, [above]])


def _empirical_masses_2d(samples: np.ndarray, spec: HistogramSpec) -> np.ndarray:
    counts, _ = np.histogramdd(samples, bins=(spec.edges(0), spec.edges(1)))
    outside = samples.shape[0] - counts.sum()
    return np.concatenate([counts.ravel(), [outside]]) / samples.shape[0]


def _target_masses_2d(density: Density, spec: HistogramSpec) -> np.ndarray:
    ex, ey = spec.edges(0), spec.edges(1)
    hx, hy = np.diff(ex) / 2, np.diff(ey) / 2
    cx, cy = (ex[:-1] + ex[1:]) / 2, (ey[:-1] + ey[1:]) / 2
    px = cx[:, None] + hx[:, None] * _NODES_2D[None, :]  # (B, q)
    py = cy[:, None] + hy[:, None] * _NODES_2D[None, :]
    gx = np.broadcast_to(px[:, None, :, None], (spec.bins, spec.bins, _NODES_2D.size, _NODES_2D.size))
    gy = np.broadcast_to(py[None, :, None, :], gx.shape)
    values = density(np.stack([gx.ravel(), gy.ravel()], axis=-1)).reshape(gx.shape)
    weights = _WEIGHTS_2D[:, None] * _WEIGHTS_2D[None, :]
    inner = np.sum(values * weights, axis=(2, 3)) * hx[:, None] * hy[None, :]
    outside = max(0.0, 1.0 - float(inner.sum()))
    return np.concatenate([inner.ravel(), [outside]])


def tv_histogram(
    samples: np.ndarray,
    reference: Density | np.ndarray,
    spec: HistogramSpec,
) -> float:
    """½ Σ_bins |empirical mass − reference mass|, overflow bins included.

    ``reference`` is either a normalised density over points ``(m, dim)``,
    integrated per bin by Gauss–Legendre quadrature, or a second sample.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, spec.dim)
    if samples.shape[0] == 0:
        raise ValueError("Cannot estimate TV from an empty sample")

    if spec.dim == 1:
        empirical = histogram_1d(samples, spec).masses()
    else:
        empirical = _empirical_masses_2d(samples, spec)

    if callable(reference):
        target = _target_masses_1d(reference, spec) if spec.dim == 1 else _target_masses_2d(reference, spec)
    else:
        other = np.asarray(reference, dtype=np.float64).reshape(-1, spec.dim)
        target = histogram_1d(other, spec).masses() if spec.dim == 1 else _empirical_masses_2d(other, spec)

    tv = 0.5 * float(np.sum(np.abs(empirical - target)))
    return min(max(tv, 0.0), 1.0)
