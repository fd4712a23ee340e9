"""Domain geometries: unbounded space, flat tori, and reflecting boxes.

A geometry owns the projection that keeps particle positions inside the
domain (periodic wrap for tori, fold-back reflection for boxes) and the
per-axis period vector used for minimal-image distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ParameterError


@dataclass
class Euclidean:
    """All of R^d; projection is the identity."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError("dimension must be >= 1")


@dataclass
class Torus:
    """Flat torus: per-axis interval [lower, lower + period) with wrap-around."""

    lower: np.ndarray
    period: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.period = np.atleast_1d(np.asarray(self.period, dtype=float))
        if self.lower.shape != self.period.shape:
            raise ParameterError("lower and period must have matching shapes")
        if np.any(self.period <= 0):
            raise ParameterError("torus periods must be strictly positive")

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.period


@dataclass
class Box:
    """Axis-aligned box with optional reflecting walls.

    Bounds may be infinite.  Axes with ``reflect`` set fold positions back
    across any finite wall (x -> 2b - x); a one-sided box at the origin is
    the familiar absolute-value reflection.  Finite bounds on an axis
    without reflection are rejected: nothing would enforce them.
    """

    lower: np.ndarray
    upper: np.ndarray
    reflect: np.ndarray = field(default=None)

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.reflect is None:
            self.reflect = np.isfinite(self.lower) | np.isfinite(self.upper)
        self.reflect = np.atleast_1d(np.asarray(self.reflect, dtype=bool))
        if not (self.lower.shape == self.upper.shape == self.reflect.shape):
            raise ParameterError("lower, upper and reflect must have matching shapes")
        finite_pair = np.isfinite(self.lower) & np.isfinite(self.upper)
        if np.any(self.lower[finite_pair] >= self.upper[finite_pair]):
            raise ParameterError("box bounds must satisfy lower < upper where finite")
        unenforced = ~self.reflect & (np.isfinite(self.lower) | np.isfinite(self.upper))
        if np.any(unenforced):
            raise ParameterError("finite box bounds require the reflect flag")

    @property
    def dim(self) -> int:
        return self.lower.size


DomainGeometry = Union[Euclidean, Torus, Box]


def dimension(geometry: DomainGeometry) -> int:
    return geometry.dim


def periods(geometry: DomainGeometry) -> np.ndarray:
    """Per-axis period vector; 0.0 marks a non-periodic axis."""
    if isinstance(geometry, Torus):
        return geometry.period.copy()
    return np.zeros(geometry.dim)


def project(geometry: DomainGeometry, x: np.ndarray) -> np.ndarray:
    """Map positions of shape (..., d) back into the domain.

    Torus axes wrap; reflecting box axes fold across their finite walls.
    The input is not modified.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(geometry, Euclidean):
        return x.copy()
    if isinstance(geometry, Torus):
        return geometry.lower + np.mod(x - geometry.lower, geometry.period)
    out = x.copy()
    for k in range(geometry.dim):
        if not geometry.reflect[k]:
            continue
        lo, hi = geometry.lower[k], geometry.upper[k]
        col = out[..., k]
        if np.isfinite(lo) and np.isfinite(hi):
            width = hi - lo
            y = np.mod(col - lo, 2.0 * width)
            col = lo + np.where(y > width, 2.0 * width - y, y)
        elif np.isfinite(lo):
            col = lo + np.abs(col - lo)
        elif np.isfinite(hi):
            col = hi - np.abs(col - hi)
        out[..., k] = col
    return out


def contains(geometry: DomainGeometry, x: np.ndarray, atol: float = 0.0) -> bool:
    """True when every position of shape (..., d) lies inside the domain."""
    x = np.asarray(x, dtype=float)
    if isinstance(geometry, Euclidean):
        return bool(np.all(np.isfinite(x)))
    if isinstance(geometry, Torus):
        above = x >= geometry.lower - atol
        below = x <= geometry.lower + geometry.period + atol
        return bool(np.all(above & below))
    above = x >= geometry.lower - atol
    below = x <= geometry.upper + atol
    return bool(np.all(above & below))


def displacement(geometry: DomainGeometry, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x - y with minimal-image convention on periodic axes."""
    dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if isinstance(geometry, Torus):
        dx = dx - geometry.period * np.rint(dx / geometry.period)
    return dx
