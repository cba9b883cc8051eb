"""Classification features from the detrended, denoised model output.

The detail block of a converged alternative fit gives a trend-free,
outlier-free reconstruction of the curve at its observation times.  After
normalizing that reconstruction to zero mean and unit standard deviation
(over the observation times), two summaries separate temporally isolated
events from diffuse variability:

* a log-transformed cumulative-sum range of (z^2 - 1), largest when the
  variability is concentrated in a single stretch of time, and
* the directed variation, the mean of z^2 strictly above the median minus
  the mean strictly below it, which picks up one-sided excursions and stays
  near zero for symmetric oscillation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DesignMatrix
from .robust import RobustFit

__all__ = [
    "EventFeatures",
    "compute_features",
    "cusum_feature",
    "detrended_z",
    "directed_variation",
    "features_from_beta",
]


@dataclass(frozen=True)
class EventFeatures:
    """(CUSUM, DV) pair for one curve; degenerate flags zero-variance cases."""

    cusum: float
    dv: float
    z: np.ndarray | None
    z_med: float
    degenerate: bool


def detrended_z(alt_fit: RobustFit, design: DesignMatrix):
    """Normalized detail-block reconstruction at the observation times.

    Returns (z, degenerate).  When every detail coefficient is zero the
    reconstruction has no variance and z is undefined; the degenerate flag is
    set and the caller assigns zero features.
    """
    if not alt_fit.converged:
        raise ValueError("alternative fit has not converged")
    detail_coef = alt_fit.beta[design.spec.n_trend + 1:]
    y_detail = design.detail_block @ detail_coef
    sd = y_detail.std()
    if sd == 0:
        return None, True
    return (y_detail - y_detail.mean()) / sd, False


def cusum_feature(z) -> float:
    """Log-compressed range of the running sum of (z^2 - 1).

    Partial sums accumulate in observation-time order and the empty prefix
    (sum 0) participates in the range, so a series with every z^2 = 1 scores
    exactly zero.
    """
    zv = np.asarray(z, dtype=float)
    n = len(zv)
    if n < 2:
        raise ValueError("need at least two points")
    s = np.cumsum(zv * zv - 1.0)
    rng = max(s.max(), 0.0) - min(s.min(), 0.0)
    return float(np.log1p(rng / np.sqrt(n)))


def directed_variation(z, z_med: float) -> tuple[float, bool]:
    """Mean z^2 strictly above the median minus mean strictly below.

    Points equal to the median belong to neither side.  Returns (dv,
    degenerate); when either side is empty the value is 0 with the
    degenerate flag set.
    """
    zv = np.asarray(z, dtype=float)
    above = zv > z_med
    below = zv < z_med
    if not above.any() or not below.any():
        return 0.0, True
    z2 = zv * zv
    return float(z2[above].mean() - z2[below].mean()), False


def features_from_beta(beta, design: DesignMatrix) -> EventFeatures:
    """CUSUM and DV from a stored coefficient vector."""
    detail_coef = np.asarray(beta)[design.spec.n_trend + 1:]
    y_detail = design.detail_block @ detail_coef
    sd = y_detail.std()
    if sd == 0:
        return EventFeatures(cusum=0.0, dv=0.0, z=None, z_med=0.0,
                             degenerate=True)
    return _features_from_z((y_detail - y_detail.mean()) / sd)


def _features_from_z(z: np.ndarray) -> EventFeatures:
    z_med = float(np.median(z))
    dv, dv_degenerate = directed_variation(z, z_med)
    return EventFeatures(
        cusum=cusum_feature(z),
        dv=dv,
        z=z,
        z_med=z_med,
        degenerate=dv_degenerate,
    )


def compute_features(alt_fit: RobustFit, design: DesignMatrix) -> EventFeatures:
    """CUSUM and DV for one converged alternative fit."""
    z, degenerate = detrended_z(alt_fit, design)
    if degenerate:
        return EventFeatures(cusum=0.0, dv=0.0, z=None, z_med=0.0,
                             degenerate=True)
    return _features_from_z(z)
