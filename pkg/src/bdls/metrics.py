"""Estimators and comparison metrics over particle snapshots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .targets import TargetDensity


@dataclass
class ObservableSpec:
    """An expectation to estimate, with its reference value.

    kinds: ``coordinate-mean`` / ``coordinate-variance`` (uses ``axis``),
    ``indicator-box`` (``bounds`` = per-axis (lo, hi) pairs), and
    ``quadratic`` (``coefficients`` c with f(x) = sum_j c_j x_j^2).
    ``provenance`` records how the reference was obtained: closed-form,
    fine-grid quadrature, or a large-N exact-sampler estimate.
    """

    name: str
    kind: str
    reference: float
    provenance: str
    axis: int = 0
    bounds: tuple = ()
    coefficients: tuple = ()

    def __post_init__(self):
        kinds = ("coordinate-mean", "coordinate-variance", "indicator-box", "quadratic")
        if self.kind not in kinds:
            raise ParameterError(f"unknown observable kind {self.kind!r}")


def empirical_estimate(positions: np.ndarray, obs: ObservableSpec) -> float:
    """Ensemble average of the observable; variance divides by N."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[0] == 0:
        raise ParameterError("empty ensemble")
    if obs.kind == "coordinate-mean":
        return float(positions[:, obs.axis].mean())
    if obs.kind == "coordinate-variance":
        col = positions[:, obs.axis]
        return float(((col - col.mean()) ** 2).mean())
    if obs.kind == "indicator-box":
        inside = np.ones(positions.shape[0], dtype=bool)
        for k, (lo, hi) in enumerate(obs.bounds):
            inside &= (positions[:, k] >= lo) & (positions[:, k] <= hi)
        return float(inside.mean())
    coeff = np.asarray(obs.coefficients, dtype=float)
    return float((positions**2 @ coeff).mean())


def mse_over_runs(estimates, reference: float) -> float:
    """Mean squared deviation from the reference across independent runs."""
    estimates = np.asarray(list(estimates), dtype=float)
    if estimates.size == 0:
        raise ParameterError("mse needs at least one run")
    return float(((estimates - reference) ** 2).mean())


@dataclass
class Occupancy:
    """Per-mode particle fractions plus the unassigned remainder."""

    fractions: np.ndarray
    unassigned: float
    counts: np.ndarray

    def total(self) -> float:
        return float(self.fractions.sum() + self.unassigned)


def mode_occupancy(positions: np.ndarray, centers: np.ndarray,
                   radius: float) -> Occupancy:
    """Assign each particle to the nearest center within ``radius``."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if radius <= 0:
        raise ParameterError("radius must be positive")
    diff = positions[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    nearest = dist.argmin(axis=1)
    within = dist[np.arange(positions.shape[0]), nearest] <= radius
    counts = np.bincount(nearest[within], minlength=centers.shape[0])
    n = positions.shape[0]
    fractions = counts / n
    return Occupancy(fractions=fractions,
                     unassigned=(n - int(counts.sum())) / n,
                     counts=counts)


def silverman_bandwidth(samples: np.ndarray) -> float:
    """1.06 * std * N^(-1/5), the usual normal-reference plotting rule."""
    samples = np.asarray(samples, dtype=float)
    sd = float(samples.std())
    if sd == 0.0:
        sd = 1.0
    return 1.06 * sd * samples.size ** (-0.2)


def kde_marginal_curve(positions: np.ndarray, axis: int, grid: np.ndarray,
                       bandwidth: float | None = None) -> np.ndarray:
    """1D Gaussian KDE of one coordinate evaluated on ``grid``."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    samples = positions[:, axis]
    if bandwidth is None:
        bandwidth = silverman_bandwidth(samples)
    if bandwidth <= 0:
        raise ParameterError("bandwidth must be positive")
    grid = np.asarray(grid, dtype=float)
    out = np.empty(grid.size)
    norm = 1.0 / (samples.size * bandwidth * np.sqrt(2.0 * np.pi))
    chunk = max(1, int(2**22 / max(samples.size, 1)))
    for start in range(0, grid.size, chunk):
        g = grid[start:start + chunk, None]
        z = (g - samples[None, :]) / bandwidth
        out[start:start + chunk] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return out


def quadrature_moments_1d(target: TargetDensity, n_cells: int = 100_000):
    """Mean and variance of a 1D torus target by fine-grid quadrature."""
    from .pde import discretize_target

    pi = discretize_target(target, n_cells)
    x = pi.cell_centers()
    w = pi.values * pi.dx
    mean = float(np.sum(w * x))
    var = float(np.sum(w * (x - mean) ** 2))
    return mean, var


def fit_exponential_rate(times: np.ndarray, values: np.ndarray,
                         value_max: float | None = None,
                         value_min: float | None = None,
                         t_min: float | None = None,
                         t_max: float | None = None) -> float:
    """Decay rate r from a least-squares line on log(values) ~ -r*t.

    The fit window can be restricted by value range and/or time range;
    at least five points must survive.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if value_max is not None:
        keep &= values <= value_max
    if value_min is not None:
        keep &= values >= value_min
    if t_min is not None:
        keep &= times >= t_min
    if t_max is not None:
        keep &= times <= t_max
    if keep.sum() < 5:
        raise ParameterError("fit window contains fewer than 5 points")
    slope, _ = np.polyfit(times[keep], np.log(values[keep]), 1)
    return float(-slope)
