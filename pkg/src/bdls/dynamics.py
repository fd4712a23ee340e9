"""Interacting-particle samplers: parallel (tamed) ULA with an optional
birth-death resampling sweep that conserves the population.

Each iteration is two-phase: every particle first takes one overdamped
Langevin step (plain or tamed Euler-Maruyama, then geometry projection);
the per-particle rates are then computed from that frozen snapshot of all
positions, and the kill/duplicate sweep runs sequentially in index order
with immediate position overwrites.  Duplicates are exact copies; the
next diffusion step separates them.

Randomness: one generator per run.  Per iteration it is consumed in a
fixed order -- the N x d standard normals of the diffusion step, then
(only when birth-death is enabled) N event uniforms and N partner
uniforms.  A partner uniform is consumed per particle so the draw count
never depends on which events fire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ParameterError, StepError
from .geometry import DomainGeometry, dimension, project
from .kde import GaussianKernel, kde_all_points
from .targets import TargetDensity


@dataclass
class RngStream:
    """Reproducible random source: (seed, stream) fully determine outputs."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence((int(self.seed), int(self.stream))))


@dataclass
class Ensemble:
    """N particle positions with their domain; N never changes."""

    positions: np.ndarray
    geometry: DomainGeometry
    generation: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        if self.positions.ndim != 2:
            raise ParameterError("positions must have shape (N, d)")
        if self.positions.shape[1] != dimension(self.geometry):
            raise ParameterError("position dimension does not match geometry")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "Ensemble":
        return Ensemble(self.positions.copy(), self.geometry, self.generation)


@dataclass
class RateVector:
    """Raw and mean-centered birth-death rates for one snapshot."""

    raw: np.ndarray
    centered: np.ndarray

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> "RateVector":
        raw = np.asarray(raw, dtype=float)
        return cls(raw=raw, centered=raw - raw.mean())

    @property
    def centering_residual(self) -> float:
        return abs(float(self.centered.sum()))


@dataclass
class SamplerConfig:
    """Run parameters for the particle samplers."""

    n_particles: int
    dt: float
    n_iterations: int
    kernel_width: float = 0.1
    seed: int = 0
    stepper: str = "ula"
    birth_death: bool = True
    snapshot_every: int = 0  # 0 = only initial and final states

    def __post_init__(self):
        if self.dt <= 0:
            raise ParameterError("dt must be positive")
        if self.n_iterations < 0:
            raise ParameterError("iteration count must be nonnegative")
        if self.n_particles < 1:
            raise ParameterError("need at least one particle")
        if self.birth_death and self.n_particles < 2:
            raise ParameterError("birth-death needs at least two particles")
        if self.kernel_width <= 0:
            raise ParameterError("kernel width must be positive")
        if self.stepper not in ("ula", "tamed-ula"):
            raise ParameterError(f"unknown stepper {self.stepper!r}")
        if self.snapshot_every < 0:
            raise ParameterError("snapshot interval must be nonnegative")


class EventLog:
    """Kill/duplicate events; every record pairs one kill with one duplicate."""

    def __init__(self):
        self.iteration: list[int] = []
        self.killed: list[int] = []
        self.duplicated: list[int] = []
        self.rate: list[float] = []

    def extend(self, iteration: int, killed, duplicated, rate):
        self.iteration.extend([iteration] * len(killed))
        self.killed.extend(int(i) for i in killed)
        self.duplicated.extend(int(i) for i in duplicated)
        self.rate.extend(float(r) for r in rate)

    @property
    def n_events(self) -> int:
        return len(self.killed)

    def as_arrays(self):
        return (np.asarray(self.iteration, dtype=int),
                np.asarray(self.killed, dtype=int),
                np.asarray(self.duplicated, dtype=int),
                np.asarray(self.rate, dtype=float))


def _check_finite(arr: np.ndarray, what: str):
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).reshape(arr.shape[0], -1).all(axis=1))[0])
        raise StepError(f"non-finite {what} for particle {bad}")


def tamed_drift(grad: np.ndarray, dt: float) -> np.ndarray:
    """dt*g / (1 + dt*|g|) per particle; magnitude strictly below 1."""
    grad = np.atleast_2d(grad)
    norms = np.sqrt((grad * grad).sum(axis=1))
    return dt * grad / (1.0 + dt * norms)[:, None]


def ula_step(ensemble: Ensemble, target: TargetDensity, dt: float,
             rng: np.random.Generator) -> Ensemble:
    """One Euler-Maruyama step x + dt*grad(log pi) + sqrt(2 dt)*xi, projected."""
    grad = np.atleast_2d(target.grad_log_unnormalized(ensemble.positions))
    _check_finite(grad, "gradient")
    noise = rng.standard_normal(ensemble.positions.shape)
    moved = ensemble.positions + dt * grad + np.sqrt(2.0 * dt) * noise
    return Ensemble(project(ensemble.geometry, moved), ensemble.geometry,
                    ensemble.generation)


def tamed_ula_step(ensemble: Ensemble, target: TargetDensity, dt: float,
                   rng: np.random.Generator) -> Ensemble:
    """ULA with the drift divided by (1 + dt*|grad|): stable for steep
    gradients, drift magnitude below 1 per step."""
    grad = np.atleast_2d(target.grad_log_unnormalized(ensemble.positions))
    _check_finite(grad, "gradient")
    noise = rng.standard_normal(ensemble.positions.shape)
    moved = ensemble.positions + tamed_drift(grad, dt) + np.sqrt(2.0 * dt) * noise
    return Ensemble(project(ensemble.geometry, moved), ensemble.geometry,
                    ensemble.generation)


_STEPPERS = {"ula": ula_step, "tamed-ula": tamed_ula_step}


def compute_rates(ensemble: Ensemble, target: TargetDensity,
                  kernel: GaussianKernel) -> RateVector:
    """raw_i = log(KDE_i) + V(x_i) on the current frozen snapshot."""
    kde = kde_all_points(kernel, ensemble.geometry, ensemble.positions)
    if np.any(kde <= 0.0):
        bad = int(np.flatnonzero(kde <= 0.0)[0])
        raise StepError(f"kernel density underflowed to zero for particle {bad}")
    potential = -np.atleast_1d(target.log_unnormalized(ensemble.positions))
    _check_finite(potential[:, None], "potential")
    return RateVector.from_raw(np.log(kde) + potential)


def birth_death_sweep(ensemble: Ensemble, rates: RateVector, dt: float,
                      rng: np.random.Generator):
    """Sequential kill/duplicate pass over particles in index order.

    A positive centered rate kills particle i with probability
    1 - exp(-rate*dt) and copies a uniformly chosen other particle onto
    it; a negative rate duplicates particle i onto a uniformly chosen
    other particle with the mirrored probability.  Returns the updated
    ensemble and the event arrays (killed, duplicated, rate).
    """
    n = ensemble.n
    if n < 2:
        raise ParameterError("birth-death needs at least two particles")
    u_event = rng.random(n)
    u_partner = rng.random(n)
    positions = ensemble.positions.copy()
    killed = np.empty(n, dtype=np.int64)
    duplicated = np.empty(n, dtype=np.int64)
    rate = np.empty(n)
    count = _kernels.bd_sweep(positions, rates.centered, dt, u_event, u_partner,
                              killed, duplicated, rate)
    out = Ensemble(positions, ensemble.geometry, ensemble.generation)
    return out, (killed[:count], duplicated[:count], rate[:count])


def bdls_iteration(ensemble: Ensemble, target: TargetDensity,
                   kernel: GaussianKernel, config: SamplerConfig,
                   rng: np.random.Generator):
    """One full sampler iteration: diffuse all, rate all, then sweep.

    With birth-death disabled this reduces to one parallel (tamed) ULA
    step and consumes exactly the same randomness as the plain stepper.
    Returns (ensemble, events, rates); rates is None when disabled.
    """
    step = _STEPPERS[config.stepper]
    moved = step(ensemble, target, config.dt, rng)
    moved.generation = ensemble.generation + 1
    if not config.birth_death:
        return moved, (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                       np.empty(0)), None
    rates = compute_rates(moved, target, kernel)
    out, events = birth_death_sweep(moved, rates, config.dt, rng)
    return out, events, rates


@dataclass
class SamplerResult:
    """Trajectory summary returned by ``run_sampler``."""

    final: Ensemble
    snapshots: list  # (iteration, positions copy)
    events: EventLog
    population: np.ndarray
    centering_residual: np.ndarray
    max_abs_rate: np.ndarray

    def snapshot_at(self, iteration: int) -> np.ndarray:
        for it, pos in self.snapshots:
            if it == iteration:
                return pos
        raise KeyError(f"no snapshot recorded at iteration {iteration}")


def run_sampler(target: TargetDensity, config: SamplerConfig,
                initial_positions: np.ndarray) -> SamplerResult:
    """Run ``config.n_iterations`` sampler iterations from the given start.

    Fully deterministic for a fixed config seed.  Snapshots are recorded
    at iteration 0, every ``snapshot_every`` iterations (when positive)
    and at the final iteration.  Population conservation and exact rate
    centering are asserted every iteration.
    """
    rng = RngStream(config.seed).generator()
    positions = project(target.geometry, np.asarray(initial_positions, dtype=float))
    ensemble = Ensemble(positions, target.geometry)
    if ensemble.n != config.n_particles:
        raise ParameterError(
            f"initial ensemble has {ensemble.n} particles, config says {config.n_particles}"
        )
    kernel = GaussianKernel(width=config.kernel_width, dim=ensemble.dim)
    log = EventLog()
    n_iter = config.n_iterations
    population = np.empty(n_iter, dtype=np.int64)
    residual = np.zeros(n_iter)
    max_rate = np.zeros(n_iter)
    snapshots = [(0, ensemble.positions.copy())]

    for j in range(1, n_iter + 1):
        ensemble, events, rates = bdls_iteration(ensemble, target, kernel, config, rng)
        population[j - 1] = ensemble.n
        assert ensemble.n == config.n_particles, "population changed"
        if rates is not None:
            residual[j - 1] = rates.centering_residual
            max_rate[j - 1] = float(np.abs(rates.raw).max())
            assert residual[j - 1] <= 1e-10 * ensemble.n * max_rate[j - 1], \
                "rate centering violated"
            log.extend(j, *events)
        if config.snapshot_every and j % config.snapshot_every == 0 and j != n_iter:
            snapshots.append((j, ensemble.positions.copy()))

    if n_iter > 0:
        snapshots.append((n_iter, ensemble.positions.copy()))
    return SamplerResult(final=ensemble, snapshots=snapshots, events=log,
                         population=population, centering_residual=residual,
                         max_abs_rate=max_rate)
