import numpy as np
import pytest

from bdls import targets as tg
from bdls.dynamics import RngStream


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


@pytest.fixture(scope="session")
def example3_data():
    gen = RngStream(0, 77).generator()
    return tg.generate_synthetic_dataset(
        (0.2, 0.6, 0.2), (-5.0, 1.0, 6.0), (1.0, 1.0, 1.0), 200, gen)


@pytest.fixture(scope="session")
def bayes_posterior(example3_data):
    return tg.BayesGmmPosterior(example3_data)


def central_difference_gradient(target, x, step=1e-6):
    """Independent finite-difference oracle for log-density gradients."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for k in range(x.size):
        h = step * max(1.0, abs(x[k]))
        xp = x.copy()
        xp[k] += h
        xm = x.copy()
        xm[k] -= h
        out[k] = (target.log_unnormalized(xp) - target.log_unnormalized(xm)) / (2 * h)
    return out


def gradient_oracle_max_err(target, points, step=1e-6):
    worst = 0.0
    for x in points:
        analytic = np.atleast_1d(target.grad_log_unnormalized(x)).ravel()
        fd = central_difference_gradient(target, np.asarray(x, dtype=float), step)
        denom = max(float(np.linalg.norm(analytic)), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - fd)) / denom)
    return worst


def bayes_interior_points(n, rng):
    """Random interior points of the 9-dim posterior domain (FD-safe)."""
    pts = []
    for _ in range(n):
        w1 = rng.uniform(0.1, 0.4)
        w2 = rng.uniform(0.1, 0.4)
        mus = rng.uniform(-6.0, 7.0, 3)
        lams = rng.uniform(0.5, 2.5, 3)
        beta = rng.uniform(0.5, 1.5)
        pts.append(np.array([w1, w2, *mus, *lams, beta]))
    return pts
