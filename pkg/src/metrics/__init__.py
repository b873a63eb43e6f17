from src.metrics.gaussian import (
    GaussianSummary,
    fisher_gaussian,
    kl_gaussian,
    moment_summary,
    tv_gaussian_1d,
    w2_gaussian,
    w2_sq_moment,
)
from src.metrics.empirical import Histogram1D, HistogramSpec, histogram_1d, tv_histogram, w2_empirical_1d

__all__ = [
    "GaussianSummary",
    "Histogram1D",
    "HistogramSpec",
    "fisher_gaussian",
    "histogram_1d",
    "kl_gaussian",
    "moment_summary",
    "tv_gaussian_1d",
    "tv_histogram",
    "w2_empirical_1d",
    "w2_gaussian",
    "w2_sq_moment",
]
