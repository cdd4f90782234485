"""Histogramming, distances, interval statistics and MSD fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import GridSpec, ModelError
from .io import write_csv


@dataclass(frozen=True)
class DensityEstimate:
    """Binned density on ``grid``.

    ``weights`` holds raw bin masses (integer sample counts for Monte Carlo
    histograms, so merging is exact and order-independent).  Samples that
    fall outside ``[r_min, r_max)`` are counted in ``underflow`` /
    ``overflow`` and are excluded from the normalised density.
    """

    grid: GridSpec
    weights: np.ndarray
    n_samples: int = 0
    underflow: int = 0
    overflow: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.shape != (self.grid.n_bins,):
            raise ModelError(f"weights must have {self.grid.n_bins} bins, got {w.shape}")
        if np.any(w < 0):
            raise ModelError("negative bin weight")

    @classmethod
    def empty(cls, grid: GridSpec) -> "DensityEstimate":
        return cls(grid, np.zeros(grid.n_bins, dtype=np.int64))

    @classmethod
    def from_density(cls, grid: GridSpec, density) -> "DensityEstimate":
        """Wrap a density already evaluated at the cell centres of ``grid``."""
        density = np.asarray(density, dtype=float)
        return cls(grid, density * grid.dr, n_samples=0)

    @property
    def in_range(self):
        return self.weights.sum()

    @property
    def density(self) -> np.ndarray:
        total = self.in_range
        if total <= 0:
            raise ModelError("empty density estimate")
        return self.weights / (total * self.grid.dr)

    def merge(self, other: "DensityEstimate") -> "DensityEstimate":
        if not self.grid.same_as(other.grid):
            raise ModelError("cannot merge estimates on different grids")
        return DensityEstimate(self.grid, self.weights + other.weights,
                               self.n_samples + other.n_samples,
                               self.underflow + other.underflow,
                               self.overflow + other.overflow)

    def to_csv(self, path):
        return write_csv(path, ["r", "phi_hat(r)"], [self.grid.centers, self.density])


def accumulate(estimate: DensityEstimate, r: float) -> DensityEstimate:
    """Add one sample at ``r`` using left-closed, right-open bins."""
    if math.isnan(r):
        raise ModelError("NaN sample")
    g = estimate.grid
    k = math.floor((r - g.r_min) / g.dr)
    if k < 0:
        return replace(estimate, n_samples=estimate.n_samples + 1, underflow=estimate.underflow + 1)
    if k >= g.n_bins:
        return replace(estimate, n_samples=estimate.n_samples + 1, overflow=estimate.overflow + 1)
    w = estimate.weights.copy()
    w[k] += 1
    return replace(estimate, weights=w, n_samples=estimate.n_samples + 1)


def accumulate_many(estimate: DensityEstimate, samples) -> DensityEstimate:
    """Vectorised :func:`accumulate` for an array of samples."""
    x = np.asarray(samples, dtype=float).ravel()
    if np.isnan(x).any():
        raise ModelError("NaN sample")
    g = estimate.grid
    k = np.floor((x - g.r_min) / g.dr)
    under = int(np.count_nonzero(k < 0))
    over = int(np.count_nonzero(k >= g.n_bins))
    inside = k[(k >= 0) & (k < g.n_bins)].astype(np.int64)
    w = estimate.weights + np.bincount(inside, minlength=g.n_bins).astype(estimate.weights.dtype)
    return DensityEstimate(g, w, estimate.n_samples + x.size,
                           estimate.underflow + under, estimate.overflow + over)


def merge_all(estimates: Sequence[DensityEstimate]) -> DensityEstimate:
    out = estimates[0]
    for e in estimates[1:]:
        out = out.merge(e)
    return out


def _values(x, grid: GridSpec) -> np.ndarray:
    if isinstance(x, DensityEstimate):
        if not grid.same_as(x.grid):
            raise ModelError("grid mismatch between density estimates")
        return x.density
    if callable(x):
        return np.asarray(x(grid.centers), dtype=float)
    raise TypeError(f"cannot compare object of type {type(x).__name__}")


def _common_grid(a, b, grid: GridSpec | None) -> GridSpec:
    if grid is not None:
        return grid
    for x in (a, b):
        if isinstance(x, DensityEstimate):
            return x.grid
    raise ModelError("comparing two profiles needs an explicit grid")


def l1_distance(a, b, grid: GridSpec | None = None) -> float:
    """``sum |a_k - b_k| dr`` over the cells of a common grid.

    ``a`` and ``b`` may be :class:`DensityEstimate` objects or callables
    (analytic profiles), which are evaluated at the cell centres.  When both
    are callables ``grid`` must be given.
    """
    grid = _common_grid(a, b, grid)
    return float(np.sum(np.abs(_values(a, grid) - _values(b, grid))) * grid.dr)


def windowed_l1(a, b, mask, grid: GridSpec | None = None) -> float:
    """L1 distance restricted to the cells selected by the boolean ``mask``."""
    grid = _common_grid(a, b, grid)
    diff = np.abs(_values(a, grid) - _values(b, grid))
    return float(np.sum(diff[np.asarray(mask, dtype=bool)]) * grid.dr)


def tail_mass(estimate: DensityEstimate, r_lo: float, r_hi: float) -> float:
    """Probability mass in the cells ``[r_lo, r_hi)`` (edges snapped to the grid)."""
    g = estimate.grid
    if not r_lo < r_hi:
        raise ModelError("r_lo must be below r_hi")
    if r_lo < g.r_min - 1e-12 or r_hi > g.r_max + 1e-12:
        raise ModelError(f"[{r_lo}, {r_hi}) is outside the grid [{g.r_min}, {g.r_max})")
    lo = int(round((r_lo - g.r_min) / g.dr))
    hi = int(round((r_hi - g.r_min) / g.dr))
    return float(np.sum(estimate.density[lo:hi]) * g.dr)


def symmetric_tail_mass(estimate: DensityEstimate, threshold: float) -> float:
    """Mass with ``|r| >= threshold`` (both tails)."""
    g = estimate.grid
    return tail_mass(estimate, g.r_min, -threshold) + tail_mass(estimate, threshold, g.r_max)


@dataclass(frozen=True)
class IntervalStats:
    mean: float
    count: int
    intervals: np.ndarray = field(repr=False)

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Empirical CDF as (sorted intervals, cumulative probability)."""
        x = np.sort(self.intervals)
        return x, np.arange(1, x.size + 1) / x.size

    def cdf_to_csv(self, path):
        x, p = self.cdf()
        return write_csv(path, ["tau", "cdf"], [x, p])


def interval_stats(events) -> IntervalStats:
    """Statistics of the waiting times between successive transactions."""
    times = np.array([e.time for e in events] if not isinstance(events, np.ndarray) else events,
                     dtype=float)
    if times.size < 2:
        raise ModelError("need at least two events for interval statistics")
    tau = np.diff(times)
    if np.any(tau < 0):
        raise ModelError("event times must be non-decreasing")
    return IntervalStats(float(tau.mean()), int(tau.size), tau)


def msd(series, max_lag: int) -> np.ndarray:
    """Mean squared displacement for lags ``1..max_lag`` (in samples)."""
    x = np.asarray(series, dtype=float)
    return np.array([np.mean((x[lag:] - x[:-lag]) ** 2) for lag in range(1, max_lag + 1)])


def msd_slope(series, max_lag: int, sample_dt: float = 1.0) -> float:
    """Least-squares slope of MSD versus time over lags ``[max_lag/10, max_lag]``.

    For a diffusing coordinate the slope is ``2 D``.
    """
    x = np.asarray(series, dtype=float)
    if max_lag < 10:
        raise ModelError("max_lag must be at least 10 samples")
    if x.size < 10 * max_lag:
        raise ModelError(f"series of {x.size} samples is too short for max_lag={max_lag}")
    if not np.all(np.isfinite(x)):
        raise ModelError("degenerate series: non-finite values")
    lags = np.arange(max_lag // 10, max_lag + 1)
    m = np.array([np.mean((x[lag:] - x[:-lag]) ** 2) for lag in lags])
    slope = np.polyfit(lags * sample_dt, m, 1)[0]
    return float(slope)
