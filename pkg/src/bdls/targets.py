"""Target distributions with analytic log-densities and gradients.

Every target exposes ``log_unnormalized`` (the log-density up to an
additive constant) and its analytic gradient, both accepting a single
point of shape ``(d,)`` or a batch of shape ``(N, d)``.  Points are
projected into the domain (torus wrap, box reflection) before evaluation,
so values agree exactly across periodic images.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from . import _kernels
from .errors import DomainViolationError, ParameterError
from .geometry import Box, DomainGeometry, Euclidean, Torus, project

TWO_PI = 2.0 * np.pi


class TargetDensity(ABC):
    """Unnormalized density on a domain; the normalizer is never computed."""

    geometry: DomainGeometry

    @property
    def dim(self) -> int:
        return self.geometry.dim

    @abstractmethod
    def log_unnormalized(self, x: np.ndarray):
        """Log-density up to an additive constant, for (d,) or (N, d) input."""

    @abstractmethod
    def grad_log_unnormalized(self, x: np.ndarray):
        """Analytic gradient of ``log_unnormalized`` with matching shape."""

    def _prepare(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = project(self.geometry, np.atleast_2d(x))
        if pts.shape[1] != self.dim:
            raise ParameterError(
                f"expected points of dimension {self.dim}, got shape {x.shape}"
            )
        return pts, single


class TorusMultimodal1D(TargetDensity):
    """Trigonometric four-well density on the circle [-2*pi, 2*pi).

    Potential 2.5*cos(2x) + 0.5*sin(x): two deep modes near -pi/2 and
    3*pi/2 and two shallower ones near pi/2 and -3*pi/2.
    """

    def __init__(self):
        self.geometry = Torus(lower=[-TWO_PI], period=[2.0 * TWO_PI])

    def log_unnormalized(self, x):
        pts, single = self._prepare(x)
        t = pts[:, 0]
        val = -(2.5 * np.cos(2.0 * t) + 0.5 * np.sin(t))
        return float(val[0]) if single else val

    def grad_log_unnormalized(self, x):
        pts, single = self._prepare(x)
        t = pts[:, 0]
        g = (5.0 * np.sin(2.0 * t) - 0.5 * np.cos(t))[:, None]
        return g[0] if single else g


class DoubleWellTorus1D(TargetDensity):
    """Density exp(-cos^2(pi*x)/epsilon) on the circle [-1, 1).

    Modes at x = +-1/2; the barrier between them scales like 1/epsilon.
    """

    def __init__(self, epsilon: float):
        if epsilon <= 0:
            raise ParameterError("epsilon must be positive")
        self.epsilon = float(epsilon)
        self.geometry = Torus(lower=[-1.0], period=[2.0])

    def log_unnormalized(self, x):
        pts, single = self._prepare(x)
        val = -np.cos(np.pi * pts[:, 0]) ** 2 / self.epsilon
        return float(val[0]) if single else val

    def grad_log_unnormalized(self, x):
        pts, single = self._prepare(x)
        g = (np.pi / self.epsilon) * np.sin(2.0 * np.pi * pts[:, 0])
        g = g[:, None]
        return g[0] if single else g


class UniformTorus(TargetDensity):
    """Uniform density on [0, L]^d; constant potential, zero drift."""

    def __init__(self, dim: int = 1, side: float = 1.0):
        if side <= 0:
            raise ParameterError("side length must be positive")
        self.side = float(side)
        self.geometry = Torus(lower=np.zeros(dim), period=np.full(dim, float(side)))

    def log_unnormalized(self, x):
        pts, single = self._prepare(x)
        return 0.0 if single else np.zeros(pts.shape[0])

    def grad_log_unnormalized(self, x):
        pts, single = self._prepare(x)
        g = np.zeros_like(pts)
        return g[0] if single else g


class GaussianMixture2D(TargetDensity):
    """Mixture of axis-aligned Gaussians in the plane.

    Defaults to four equally weighted components arranged as a square:
    horizontal bars at y = 8 and y = 2, vertical bars at x = -3 and x = 3.
    """

    def __init__(self, weights=None, means=None, cov_diags=None):
        if weights is None:
            weights = np.full(4, 0.25)
            means = np.array([[0.0, 8.0], [0.0, 2.0], [-3.0, 5.0], [3.0, 5.0]])
            cov_diags = np.array([[1.2, 0.01], [1.2, 0.01], [0.01, 2.0], [0.01, 2.0]])
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.cov_diags = np.asarray(cov_diags, dtype=float)
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be nonnegative and sum to 1")
        if np.any(self.cov_diags <= 0):
            raise ParameterError("covariance diagonals must be strictly positive")
        if self.means.shape != self.cov_diags.shape or self.means.shape[0] != self.weights.size:
            raise ParameterError("inconsistent mixture parameter shapes")
        self.geometry = Euclidean(self.means.shape[1])
        # per-component log normalizers for the exact (normalized) density
        self._log_norm = -0.5 * (self.dim * np.log(TWO_PI)
                                 + np.log(self.cov_diags).sum(axis=1))

    @property
    def n_components(self) -> int:
        return self.weights.size

    def _component_logs(self, pts):
        diff = pts[:, None, :] - self.means[None, :, :]
        maha = (diff * diff / self.cov_diags[None, :, :]).sum(axis=2)
        with np.errstate(divide="ignore"):
            logw = np.where(self.weights > 0, np.log(self.weights), -np.inf)
        return logw[None, :] + self._log_norm[None, :] - 0.5 * maha, diff

    def log_unnormalized(self, x):
        pts, single = self._prepare(x)
        comp, _ = self._component_logs(pts)
        shift = comp.max(axis=1, keepdims=True)
        val = shift[:, 0] + np.log(np.exp(comp - shift).sum(axis=1))
        return float(val[0]) if single else val

    def grad_log_unnormalized(self, x):
        pts, single = self._prepare(x)
        comp, diff = self._component_logs(pts)
        shift = comp.max(axis=1, keepdims=True)
        resp = np.exp(comp - shift)
        resp /= resp.sum(axis=1, keepdims=True)
        g = (resp[:, :, None] * (-diff / self.cov_diags[None, :, :])).sum(axis=1)
        return g[0] if single else g

    def exact_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n i.i.d. draws; component choice then a diagonal Gaussian draw."""
        if n < 0:
            raise ParameterError("sample count must be nonnegative")
        comps = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comps] + z * np.sqrt(self.cov_diags[comps])

    # closed-form moments, used as observable reference values
    def mean_vector(self) -> np.ndarray:
        return self.weights @ self.means

    def second_moment(self, axis: int) -> float:
        return float(self.weights @ (self.means[:, axis] ** 2 + self.cov_diags[:, axis]))

    def box_probability(self, bounds) -> float:
        """P(all axes within [lo, hi]) via the Gaussian CDF, per component."""
        from math import erf, sqrt

        total = 0.0
        for w, m, v in zip(self.weights, self.means, self.cov_diags):
            p = 1.0
            for k, (lo, hi) in enumerate(bounds):
                s = sqrt(2.0 * v[k])
                p *= 0.5 * (erf((hi - m[k]) / s) - erf((lo - m[k]) / s))
            total += w * p
        return total


def sample_diag_gaussian(mean, cov_diag, n: int, rng: np.random.Generator) -> np.ndarray:
    """n exact draws from a single axis-aligned Gaussian."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov_diag = np.atleast_1d(np.asarray(cov_diag, dtype=float))
    if np.any(cov_diag <= 0):
        raise ParameterError("covariance diagonal must be strictly positive")
    return mean + rng.standard_normal((n, mean.size)) * np.sqrt(cov_diag)


def exact_sample(target, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact i.i.d. positions from a target that supports direct sampling."""
    if isinstance(target, GaussianMixture2D):
        return target.exact_sample(n, rng)
    raise ParameterError(f"no exact sampler for {type(target).__name__}")


def generate_synthetic_dataset(weights, means, precisions, n: int,
                               rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. scalars from a univariate Gaussian mixture.

    ``precisions`` are inverse variances; reproducible for a fixed
    generator state.
    """
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    precisions = np.asarray(precisions, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ParameterError("mixture weights must be nonnegative and sum to 1")
    if np.any(precisions <= 0):
        raise ParameterError("precisions must be strictly positive")
    if n == 0:
        return np.empty(0)
    comps = rng.choice(weights.size, size=n, p=weights)
    return means[comps] + rng.standard_normal(n) / np.sqrt(precisions[comps])


class BayesGmmPosterior(TargetDensity):
    """Posterior of a 3-component univariate Gaussian mixture fit.

    Parameter vector x = (w1, w2, mu1, mu2, mu3, lam1, lam2, lam3, beta);
    the third weight is implicit (1 - w1 - w2, clamped at zero outside the
    relaxed simplex).  Component means carry a Gaussian prior centered on
    the data mean, precisions a Gamma(alpha, beta) prior, and beta itself
    a Gamma(g, h_prior) hyperprior; kappa and h_prior are set from the
    data range R as 4/R^2 and 100*g/(alpha*R^2).

    Weights live in [0, 1] with reflecting walls, precisions and beta in
    [0, inf) with reflection at the origin, means are unconstrained.
    """

    ALPHA = 2.0
    G = 0.02

    def __init__(self, dataset: np.ndarray):
        dataset = np.asarray(dataset, dtype=float).ravel()
        if dataset.size < 2:
            raise ParameterError("dataset must contain at least two points")
        if not np.all(np.isfinite(dataset)):
            raise ParameterError("dataset must be finite")
        self.dataset = dataset
        self.data_mean = float(dataset.mean())
        self.data_range = float(dataset.max() - dataset.min())
        if self.data_range <= 0:
            raise ParameterError("dataset must not be constant")
        self.kappa = 4.0 / self.data_range**2
        self.h_prior = 100.0 * self.G / (self.ALPHA * self.data_range**2)
        lower = np.array([0.0, 0.0, -np.inf, -np.inf, -np.inf, 0.0, 0.0, 0.0, 0.0])
        upper = np.array([1.0, 1.0, np.inf, np.inf, np.inf,
                          np.inf, np.inf, np.inf, np.inf])
        reflect = np.array([True, True, False, False, False, True, True, True, True])
        self.geometry = Box(lower=lower, upper=upper, reflect=reflect)

    _COORDS = ("w1", "w2", "mu1", "mu2", "mu3", "lam1", "lam2", "lam3", "beta")

    def _eval(self, pts):
        return _kernels.bgmm_logpost_grad(
            pts, self.dataset, self.data_mean, self.kappa,
            self.ALPHA, self.G, self.h_prior,
        )

    def _raise_on_nonfinite(self, pts, logp):
        bad = np.flatnonzero(~np.isfinite(logp))
        if bad.size:
            i = int(bad[0])
            row = pts[i]
            # name the coordinate that pins the density at zero
            for j in (5, 6, 7, 8):
                if row[j] <= 0.0:
                    raise DomainViolationError(
                        f"log-density is non-finite: coordinate {self._COORDS[j]}"
                        f" = {row[j]} at point index {i}"
                    )
            raise DomainViolationError(
                f"log-density is non-finite at point index {i}: "
                f"degenerate weights (w1={row[0]}, w2={row[1]})"
            )

    def log_unnormalized(self, x):
        pts, single = self._prepare(x)
        logp, _ = self._eval(pts)
        self._raise_on_nonfinite(pts, logp)
        return float(logp[0]) if single else logp

    def grad_log_unnormalized(self, x):
        pts, single = self._prepare(x)
        logp, grad = self._eval(pts)
        self._raise_on_nonfinite(pts, logp)
        return grad[0] if single else grad
