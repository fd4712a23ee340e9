"""Hot numerical kernels, each with a numba-compiled and a pure-numpy twin.

Backend selection happens once at import time from the ``BDLS_BACKEND``
environment variable:

* ``BDLS_BACKEND=numba`` (or unset, when numba is importable): the jitted
  kernels are bound to the public names.
* ``BDLS_BACKEND=numpy``: the pure-numpy fallbacks are used instead.

Both twins of every kernel stay importable under their private names so
tests and ``benchmarks/bench_backends.py`` can compare them directly.

Determinism notes.  The pairwise density sweep sums contributions in
ascending particle index for every output element (the symmetric-pair
traversal preserves that order, see ``_kde_all``), so its result does not
depend on thread count and matches a plain ascending double loop bit for
bit on the numba path.  The birth-death sweep consumes pre-drawn uniforms
and is sequential by contract.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.linalg

_requested = os.environ.get("BDLS_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"BDLS_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    NUMBA_ENABLED = False
else:
    try:
        import numba

        # the default TBB layer is version-sensitive; workqueue always works
        numba.config.THREADING_LAYER = "workqueue"
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        if _requested == "numba":
            raise
        NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "numpy"


def set_num_threads(n: int) -> None:
    """Limit numba's thread pool; no-op on the numpy backend."""
    if NUMBA_ENABLED and n >= 1:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# Pairwise Gaussian kernel-density sweep
# ---------------------------------------------------------------------------

def _kde_all_numpy(pos: np.ndarray, axis_periods: np.ndarray,
                   inv_two_h2: float, norm_over_n: float) -> np.ndarray:
    """Symmetric-pair sweep, vectorized over the j > i tail of each row."""
    n, d = pos.shape
    out = np.zeros(n)
    periodic = axis_periods > 0
    for i in range(n):
        out[i] += 1.0  # self pair, exp(0)
        if i + 1 == n:
            break
        dx = pos[i] - pos[i + 1:]
        if periodic.any():
            p = axis_periods[periodic]
            dx[:, periodic] -= p * np.rint(dx[:, periodic] / p)
        kval = np.exp(-(dx * dx).sum(axis=1) * inv_two_h2)
        out[i] += kval.sum()
        out[i + 1:] += kval
    return out * norm_over_n


if NUMBA_ENABLED:

    @numba.njit(cache=True)
    def _kde_all_numba(pos, axis_periods, inv_two_h2, norm_over_n):
        n, d = pos.shape
        out = np.zeros(n)
        for i in range(n):
            out[i] += 1.0
            for j in range(i + 1, n):
                sq = 0.0
                for k in range(d):
                    dx = pos[i, k] - pos[j, k]
                    p = axis_periods[k]
                    if p > 0.0:
                        dx -= p * np.rint(dx / p)
                    sq += dx * dx
                kval = np.exp(-sq * inv_two_h2)
                out[i] += kval
                out[j] += kval
        return out * norm_over_n

    kde_all = _kde_all_numba
else:
    _kde_all_numba = None
    kde_all = _kde_all_numpy


# ---------------------------------------------------------------------------
# Birth-death sweep (sequential: later events see earlier overwrites)
# ---------------------------------------------------------------------------

def _bd_sweep_numpy(pos, centered, dt, u_event, u_partner,
                    killed, duplicated, rate):
    n = pos.shape[0]
    prob = -np.expm1(-np.abs(centered) * dt)
    fired = np.flatnonzero((centered != 0.0) & (u_event < prob))
    count = 0
    for i in fired:
        partner = int(u_partner[i] * (n - 1))
        if partner > n - 2:
            partner = n - 2
        if partner >= i:
            partner += 1
        if centered[i] > 0.0:
            pos[i] = pos[partner]
            killed[count] = i
            duplicated[count] = partner
        else:
            pos[partner] = pos[i]
            killed[count] = partner
            duplicated[count] = i
        rate[count] = centered[i]
        count += 1
    return count


if NUMBA_ENABLED:

    @numba.njit(cache=True)
    def _bd_sweep_numba(pos, centered, dt, u_event, u_partner,
                        killed, duplicated, rate):
        n, d = pos.shape
        count = 0
        for i in range(n):
            b = centered[i]
            if b == 0.0:
                continue
            prob = -np.expm1(-abs(b) * dt)
            if u_event[i] >= prob:
                continue
            partner = int(u_partner[i] * (n - 1))
            if partner > n - 2:
                partner = n - 2
            if partner >= i:
                partner += 1
            if b > 0.0:
                for k in range(d):
                    pos[i, k] = pos[partner, k]
                killed[count] = i
                duplicated[count] = partner
            else:
                for k in range(d):
                    pos[partner, k] = pos[i, k]
                killed[count] = partner
                duplicated[count] = i
            rate[count] = b
            count += 1
        return count

    bd_sweep = _bd_sweep_numba
else:
    _bd_sweep_numba = None
    bd_sweep = _bd_sweep_numpy


# ---------------------------------------------------------------------------
# Mixture-model posterior for the 9-parameter Bayesian fit
#
# State layout x = (w1, w2, mu1, mu2, mu3, lam1, lam2, lam3, beta); the
# third weight is implicit, clamped at zero when 1 - w1 - w2 goes negative.
# ---------------------------------------------------------------------------

def _bgmm_numpy(x, y, prior_mean, kappa, alpha, g, h_prior):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    npart = x.shape[0]
    logp = np.full(npart, -np.inf)
    grad = np.zeros((npart, 9))
    valid = (x[:, 5:8] > 0.0).all(axis=1) & (x[:, 8] > 0.0)
    if not valid.any():
        return logp, grad

    xv = x[valid]
    w = np.empty((xv.shape[0], 3))
    w[:, 0] = xv[:, 0]
    w[:, 1] = xv[:, 1]
    w3 = 1.0 - xv[:, 0] - xv[:, 1]
    active3 = w3 > 0.0
    w[:, 2] = np.where(active3, w3, 0.0)
    mu = xv[:, 2:5]
    lam = xv[:, 5:8]
    beta = xv[:, 8]

    prior = ((3.0 * alpha + g - 1.0) * np.log(beta)
             + (alpha - 1.0) * np.log(lam).sum(axis=1)
             - 0.5 * kappa * ((mu - prior_mean) ** 2).sum(axis=1)
             - beta * (h_prior + lam.sum(axis=1)))

    # data term via per-point max-shifted mixture sums, (nvalid, ndata, 3)
    diff = y[None, :, None] - mu[:, None, :]
    expo = -0.5 * lam[:, None, :] * diff * diff
    shift = expo.max(axis=2, keepdims=True)
    gk = np.sqrt(lam)[:, None, :] * np.exp(expo - shift)
    s = (w[:, None, :] * gk).sum(axis=2)
    ok = (s > 0.0).all(axis=1)
    s_safe = np.where(s > 0.0, s, 1.0)

    loglik = (shift[:, :, 0] + np.log(s_safe)).sum(axis=1)
    r = w[:, None, :] * gk / s_safe[:, :, None]
    t = gk / s_safe[:, :, None]

    gv = np.zeros((xv.shape[0], 9))
    t3sum = np.where(active3, t[:, :, 2].sum(axis=1), 0.0)
    gv[:, 0] = t[:, :, 0].sum(axis=1) - t3sum
    gv[:, 1] = t[:, :, 1].sum(axis=1) - t3sum
    gv[:, 2:5] = (r * lam[:, None, :] * diff).sum(axis=1) - kappa * (mu - prior_mean)
    gv[:, 5:8] = ((r * (0.5 / lam[:, None, :] - 0.5 * diff * diff)).sum(axis=1)
                  + (alpha - 1.0) / lam - beta[:, None])
    gv[:, 8] = (3.0 * alpha + g - 1.0) / beta - (h_prior + lam.sum(axis=1))
    gv[~ok] = 0.0

    lv = np.where(ok, prior + loglik, -np.inf)
    logp[valid] = lv
    grad[valid] = gv
    return logp, grad


if NUMBA_ENABLED:

    @numba.njit(cache=True, parallel=True)
    def _bgmm_numba(x, y, prior_mean, kappa, alpha, g, h_prior):
        npart = x.shape[0]
        ndata = y.shape[0]
        logp = np.empty(npart)
        grad = np.zeros((npart, 9))
        for p in numba.prange(npart):
            w1 = x[p, 0]
            w2 = x[p, 1]
            w3 = 1.0 - w1 - w2
            active3 = w3 > 0.0
            if not active3:
                w3 = 0.0
            lam1 = x[p, 5]
            lam2 = x[p, 6]
            lam3 = x[p, 7]
            beta = x[p, 8]
            if lam1 <= 0.0 or lam2 <= 0.0 or lam3 <= 0.0 or beta <= 0.0:
                logp[p] = -np.inf
                continue
            mu1 = x[p, 2]
            mu2 = x[p, 3]
            mu3 = x[p, 4]
            sq1 = np.sqrt(lam1)
            sq2 = np.sqrt(lam2)
            sq3 = np.sqrt(lam3)
            lp = ((3.0 * alpha + g - 1.0) * np.log(beta)
                  + (alpha - 1.0) * (np.log(lam1) + np.log(lam2) + np.log(lam3))
                  - 0.5 * kappa * ((mu1 - prior_mean) ** 2
                                   + (mu2 - prior_mean) ** 2
                                   + (mu3 - prior_mean) ** 2)
                  - beta * (h_prior + lam1 + lam2 + lam3))
            g_w1 = 0.0
            g_w2 = 0.0
            g_mu1 = -kappa * (mu1 - prior_mean)
            g_mu2 = -kappa * (mu2 - prior_mean)
            g_mu3 = -kappa * (mu3 - prior_mean)
            g_l1 = (alpha - 1.0) / lam1 - beta
            g_l2 = (alpha - 1.0) / lam2 - beta
            g_l3 = (alpha - 1.0) / lam3 - beta
            g_b = (3.0 * alpha + g - 1.0) / beta - (h_prior + lam1 + lam2 + lam3)
            bad = False
            for i in range(ndata):
                d1 = y[i] - mu1
                d2 = y[i] - mu2
                d3 = y[i] - mu3
                e1 = -0.5 * lam1 * d1 * d1
                e2 = -0.5 * lam2 * d2 * d2
                e3 = -0.5 * lam3 * d3 * d3
                m = e1
                if e2 > m:
                    m = e2
                if e3 > m:
                    m = e3
                t1 = sq1 * np.exp(e1 - m)
                t2 = sq2 * np.exp(e2 - m)
                t3 = sq3 * np.exp(e3 - m)
                s = w1 * t1 + w2 * t2 + w3 * t3
                if s <= 0.0:
                    bad = True
                    break
                lp += m + np.log(s)
                r1 = w1 * t1 / s
                r2 = w2 * t2 / s
                r3 = w3 * t3 / s
                g_w1 += t1 / s
                g_w2 += t2 / s
                if active3:
                    g_w1 -= t3 / s
                    g_w2 -= t3 / s
                g_mu1 += r1 * lam1 * d1
                g_mu2 += r2 * lam2 * d2
                g_mu3 += r3 * lam3 * d3
                g_l1 += r1 * (0.5 / lam1 - 0.5 * d1 * d1)
                g_l2 += r2 * (0.5 / lam2 - 0.5 * d2 * d2)
                g_l3 += r3 * (0.5 / lam3 - 0.5 * d3 * d3)
            if bad:
                logp[p] = -np.inf
                continue
            logp[p] = lp
            grad[p, 0] = g_w1
            grad[p, 1] = g_w2
            grad[p, 2] = g_mu1
            grad[p, 3] = g_mu2
            grad[p, 4] = g_mu3
            grad[p, 5] = g_l1
            grad[p, 6] = g_l2
            grad[p, 7] = g_l3
            grad[p, 8] = g_b

        return logp, grad

    bgmm_logpost_grad = _bgmm_numba
else:
    _bgmm_numba = None
    bgmm_logpost_grad = _bgmm_numpy


# ---------------------------------------------------------------------------
# Cyclic (periodic) tridiagonal solver: Thomas + Sherman-Morrison
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:

    @numba.njit(cache=True)
    def _thomas_numba(sub, diag, sup, b):
        n = diag.shape[0]
        cp = np.empty(n)
        dp = np.empty(n)
        cp[0] = sup[0] / diag[0]
        dp[0] = b[0] / diag[0]
        for i in range(1, n):
            denom = diag[i] - sub[i] * cp[i - 1]
            cp[i] = sup[i] / denom
            dp[i] = (b[i] - sub[i] * dp[i - 1]) / denom
        x = np.empty(n)
        x[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = dp[i] - cp[i] * x[i + 1]
        return x


def _thomas_numpy(sub, diag, sup, b):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = sup[:-1]
    ab[1] = diag
    ab[2, :-1] = sub[1:]
    return scipy.linalg.solve_banded((1, 1), ab, b)


class CyclicTridiagSolver:
    """Pre-factored solver for cyclic tridiagonal systems.

    The matrix has diagonals (sub, diag, sup) plus the two periodic corner
    entries M[0, n-1] = corner_top and M[n-1, 0] = corner_bottom.  The
    corners are peeled off with a rank-one update whose auxiliary solve is
    done once at construction; each ``solve`` then costs one tridiagonal
    sweep plus the correction.
    """

    def __init__(self, sub, diag, sup, corner_bottom, corner_top):
        n = diag.shape[0]
        if n < 3:
            raise ValueError("cyclic solver needs at least 3 unknowns")
        self._gamma = -diag[0]
        self._alpha = corner_top
        self._beta = corner_bottom
        d = diag.copy()
        d[0] -= self._gamma
        d[-1] -= self._alpha * self._beta / self._gamma
        self._sub = sub.astype(float).copy()
        self._diag = d
        self._sup = sup.astype(float).copy()
        u = np.zeros(n)
        u[0] = self._gamma
        u[-1] = self._beta
        self._z = self._tridiag(u)
        self._denom = 1.0 + self._z[0] + (self._alpha / self._gamma) * self._z[-1]

    def _tridiag(self, b):
        if NUMBA_ENABLED:
            return _thomas_numba(self._sub, self._diag, self._sup, b)
        return _thomas_numpy(self._sub, self._diag, self._sup, b)

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = self._tridiag(np.asarray(b, dtype=float))
        factor = (y[0] + (self._alpha / self._gamma) * y[-1]) / self._denom
        return y - factor * self._z
