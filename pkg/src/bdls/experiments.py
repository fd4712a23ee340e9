"""Configuration-driven experiment harness.

Seven experiments are registered, each with full-study defaults that a
config file may override:

* ``example1``        -- four-well torus target: grid KL-decay comparison
                         plus the BDLS/ULA mean-variance MSE study.
* ``example1-wide``   -- same with the wide N(0, 4) initialization.
* ``example2``        -- 2D four-component Gaussian mixture: observable
                         errors along iterations plus mode occupancy.
* ``example3``        -- Bayesian mixture posterior on R^9 with tamed ULA
                         and reflecting walls; permutation-mode occupancy.
* ``double-well-rate``-- grid KL-decay rates across barrier heights.
* ``uniform-torus``   -- heat-flow KL rates across torus sizes.
* ``bde-oracle``      -- stepped birth-death flow vs its closed form.

Config files are flat key/value INI text::

    [experiment]
    id = example1
    seeds = 0 1 2
    out_dir = runs/demo

    [params]
    n_particles = 50

Unknown parameter keys are rejected.  ``run`` also accepts a previously
written ``manifest.json`` and then reproduces that run's CSV files byte
for byte.  Per-cell seeds derive as sha256(base_seed, method, seed index)
so adding methods or seeds never perturbs existing cells.
"""

from __future__ import annotations

import configparser
import hashlib
import itertools
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__ as _pkg_version
from ._kernels import BACKEND
from .dynamics import RngStream, SamplerConfig, SamplerResult, run_sampler
from .errors import ConfigError
from .metrics import (
    ObservableSpec,
    empirical_estimate,
    fit_exponential_rate,
    mode_occupancy,
    mse_over_runs,
    quadrature_moments_1d,
)
from .pde import PdeConfig, bde_closed_form, GridDynamics, resolve_initial, run_pde
from .targets import (
    BayesGmmPosterior,
    DoubleWellTorus1D,
    GaussianMixture2D,
    TorusMultimodal1D,
    UniformTorus,
    generate_synthetic_dataset,
    sample_diag_gaussian,
)

EXPERIMENT_IDS = (
    "example1",
    "example1-wide",
    "example2",
    "example3",
    "double-well-rate",
    "uniform-torus",
    "bde-oracle",
)

EXAMPLE3_TRUE_WEIGHTS = (0.2, 0.6, 0.2)
EXAMPLE3_TRUE_MEANS = (-5.0, 1.0, 6.0)
EXAMPLE3_TRUE_PRECISIONS = (1.0, 1.0, 1.0)


def _example1_defaults(wide: bool) -> dict:
    return {
        "base_seed": 2026,
        "n_particles": 100,
        "dt": 0.03,
        "kernel_width": 0.05,
        "n_iterations": 2000,
        "init_mean": 0.0,
        "init_var": 4.0 if wide else 0.2,
        "particle_counts": (25, 50, 100, 200, 400),
        "pde_n_cells": 500,
        "pde_tau": 5e-3,
        "pde_t_final": 10.0,
        "csv_stride": 1,
        "quadrature_cells": 100_000,
    }


def default_params(experiment_id: str) -> dict:
    if experiment_id == "example1":
        return _example1_defaults(wide=False)
    if experiment_id == "example1-wide":
        return _example1_defaults(wide=True)
    if experiment_id == "example2":
        return {
            "base_seed": 2026,
            "n_particles": 1000,
            "dt": 1e-3,
            "kernel_width": 0.3,
            "n_iterations": 200_000,
            "record_every": 400,
            "snapshot_every": 20_000,
            "mode_radius": 1.5,
        }
    if experiment_id == "example3":
        return {
            "base_seed": 2026,
            "n_particles": 2000,
            "dt": 1.5e-6,
            "kernel_width": 1.1,
            "n_iterations": 200_000,
            "record_every": 1000,
            "snapshot_every": 20_000,
            "dataset_size": 200,
            "dataset_seed": 0,
            "mode_radius": 1.5,
            "occupied_threshold": 0.02,
        }
    if experiment_id == "double-well-rate":
        return {
            "base_seed": 2026,
            "epsilons": (0.25, 0.125),
            "n_cells": 500,
            "tau": 5e-3,
            "t_final_fpe": 1500.0,
            "t_final_bdl": 25.0,
            "t_final_bde": 25.0,
            "fit_kl_max": 1e-3,
            "fit_kl_min": 1e-8,
            "csv_stride": 50,
        }
    if experiment_id == "uniform-torus":
        return {
            "base_seed": 2026,
            "side_lengths": (4.0, 8.0),
            "n_cells": 500,
            "tau": 5e-3,
            "t_final": 30.0,
            "fit_kl_max": 1e-4,
            "fit_kl_min": 1e-8,
            "csv_stride": 10,
        }
    if experiment_id == "bde-oracle":
        return {
            "base_seed": 2026,
            "n_cells": 500,
            "tau": 5e-3,
            "check_times": (0.5, 1.0, 2.0, 5.0),
            "init_mean": 0.0,
            "init_var": 0.2,
        }
    raise ConfigError(f"unknown experiment id {experiment_id!r}; "
                      f"known: {', '.join(EXPERIMENT_IDS)}")


def default_seeds(experiment_id: str) -> tuple:
    return {
        "example1": tuple(range(20)),
        "example1-wide": tuple(range(20)),
        "example2": tuple(range(5)),
        "example3": tuple(range(3)),
    }.get(experiment_id, (0,))


@dataclass
class ExperimentSpec:
    """A resolved experiment: id, full parameter set, seed indices."""

    experiment_id: str
    params: dict
    seeds: tuple
    out_dir: str | None = None

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENT_IDS:
            raise ConfigError(f"unknown experiment id {self.experiment_id!r}; "
                              f"known: {', '.join(EXPERIMENT_IDS)}")
        if not self.seeds:
            raise ConfigError("seed list must be nonempty")
        self._validate_params()

    def _validate_params(self):
        p = self.params
        for key in ("dt", "kernel_width", "tau", "pde_tau", "mode_radius"):
            if key in p and not p[key] > 0:
                raise ConfigError(f"parameter {key!r} must be positive, got {p[key]!r}")
        for key in ("n_particles", "n_iterations", "n_cells", "pde_n_cells",
                    "dataset_size", "record_every", "snapshot_every", "csv_stride"):
            if key in p and int(p[key]) < 0:
                raise ConfigError(f"parameter {key!r} must be nonnegative, got {p[key]!r}")
        for key in ("t_final", "pde_t_final", "t_final_fpe", "t_final_bdl", "t_final_bde"):
            if key in p and not p[key] >= 0:
                raise ConfigError(f"parameter {key!r} must be nonnegative, got {p[key]!r}")


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = raw.replace(",", " ").split()
            elem = default[0] if default else 0.0
            return tuple(int(v) if isinstance(elem, int) else float(v) for v in parts)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"cannot parse value for {key!r}: {exc}") from exc


def parse_seeds(raw) -> tuple:
    if isinstance(raw, (list, tuple)):
        return tuple(int(s) for s in raw)
    parts = str(raw).replace(",", " ").split()
    if not parts:
        raise ConfigError("seed list must be nonempty")
    return tuple(int(s) for s in parts)


def load_config(path) -> ExperimentSpec:
    """Parse an INI config file or a manifest.json into an ExperimentSpec."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        params = {k: tuple(v) if isinstance(v, list) else v
                  for k, v in doc["params"].items()}
        return ExperimentSpec(doc["experiment"], params, parse_seeds(doc["seeds"]))

    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if not parser.has_section("experiment"):
        raise ConfigError("config needs an [experiment] section with an 'id' key")
    exp = dict(parser.items("experiment"))
    unknown = set(exp) - {"id", "seeds", "out_dir"}
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
    if "id" not in exp:
        raise ConfigError("missing experiment id")
    experiment_id = exp["id"].strip()
    params = default_params(experiment_id)
    if parser.has_section("params"):
        for key, raw in parser.items("params"):
            if key not in params:
                raise ConfigError(
                    f"unknown parameter {key!r} for experiment {experiment_id!r}; "
                    f"known: {', '.join(sorted(params))}"
                )
            params[key] = _coerce(key, raw, params[key])
    extra = set(parser.sections()) - {"experiment", "params"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    seeds = (parse_seeds(exp["seeds"]) if "seeds" in exp
             else default_seeds(experiment_id))
    return ExperimentSpec(experiment_id, params, seeds, exp.get("out_dir"))


def derive_cell_seed(base_seed: int, method: str, seed_index: int) -> int:
    """Stable per-cell seed; independent of Python's salted hash()."""
    digest = hashlib.sha256(f"{base_seed}:{method}:{seed_index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------------------
# CSV plumbing (byte-stable: floats via shortest round-trip repr)
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_snapshot(path: Path, iteration: int, positions: np.ndarray):
    """One row per particle, coordinate columns, header naming the iteration."""
    path.parent.mkdir(parents=True, exist_ok=True)
    d = positions.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(f"# iteration {iteration}\n")
        fh.write(",".join(f"x{k}" for k in range(d)) + "\n")
        for row in positions:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_events(path: Path, result: SamplerResult):
    its, killed, dup, rate = result.events.as_arrays()
    write_csv(path, ("iteration", "killed_index", "duplicated_index", "rate"),
              zip(its, killed, dup, rate))


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def example2_observables(gm: GaussianMixture2D) -> list:
    """The four tracked expectations with closed-form references."""
    box = ((-5.0, 5.0), (1.2, 2.8))
    quad = (1.0 / 3.0, 1.0 / 5.0)
    mean = gm.mean_vector()
    quad_ref = quad[0] * gm.second_moment(0) + quad[1] * gm.second_moment(1)
    return [
        ObservableSpec("mean_x", "coordinate-mean", float(mean[0]),
                       "closed-form mixture mean", axis=0),
        ObservableSpec("mean_y", "coordinate-mean", float(mean[1]),
                       "closed-form mixture mean", axis=1),
        ObservableSpec("box_indicator", "indicator-box", gm.box_probability(box),
                       "closed-form Gaussian CDF", bounds=box),
        ObservableSpec("quadratic", "quadratic", quad_ref,
                       "closed-form mixture second moments", coefficients=quad),
    ]


def example3_permutation_modes() -> np.ndarray:
    """The (mu1, mu2) projections of the 3! label permutations."""
    pairs = {(EXAMPLE3_TRUE_MEANS[p[0]], EXAMPLE3_TRUE_MEANS[p[1]])
             for p in itertools.permutations(range(3))}
    return np.array(sorted(pairs))


def example3_dataset(params: dict) -> np.ndarray:
    rng = RngStream(int(params["dataset_seed"]), 77).generator()
    return generate_synthetic_dataset(
        EXAMPLE3_TRUE_WEIGHTS, EXAMPLE3_TRUE_MEANS, EXAMPLE3_TRUE_PRECISIONS,
        int(params["dataset_size"]), rng,
    )


def example3_initial_positions(n: int, rng: np.random.Generator) -> np.ndarray:
    """Study initialization: Dirichlet weights, uniform means/precisions."""
    w = rng.dirichlet((1.0, 1.0, 1.0), size=n)[:, :2]
    mus = rng.uniform(3.0, 7.0, size=(n, 3))
    lams = rng.uniform(0.5, 2.5, size=(n, 3))
    beta = rng.uniform(0.5, 1.5, size=(n, 1))
    return np.concatenate([w, mus, lams, beta], axis=1)


def _strided(times, kl, stride):
    idx = np.arange(0, times.size, max(1, int(stride)))
    if idx[-1] != times.size - 1:
        idx = np.append(idx, times.size - 1)
    return idx


class _CellRunner:
    """Runs cells, recording failed ones without aborting the rest."""

    def __init__(self):
        self.cells = []

    def run(self, name: str, fn):
        try:
            out = fn()
        except Exception as exc:  # record and continue with remaining cells
            self.cells.append({"name": name, "status": "failed",
                               "error": f"{type(exc).__name__}: {exc}"})
            return None
        self.cells.append({"name": name, "status": "ok"})
        return out


def _particle_cell(target, method: str, seed: int, n: int, params: dict,
                   init_positions: np.ndarray, record_every: int,
                   stepper: str = "ula") -> SamplerResult:
    config = SamplerConfig(
        n_particles=n,
        dt=float(params["dt"]),
        n_iterations=int(params["n_iterations"]),
        kernel_width=float(params["kernel_width"]),
        seed=seed,
        stepper=stepper,
        birth_death=(method == "bdls"),
        snapshot_every=record_every,
    )
    return run_sampler(target, config, init_positions)


def _run_example1(spec: ExperimentSpec, out: Path, runner: _CellRunner):
    p = spec.params
    target = TorusMultimodal1D()
    init = ("gaussian", float(p["init_mean"]), float(p["init_var"]))

    kl_series = {}
    for dynamics in ("fpe", "bde", "bdl-fpe"):
        def cell(dynamics=dynamics):
            cfg = PdeConfig(target, dynamics, float(p["pde_t_final"]), init,
                            n_cells=int(p["pde_n_cells"]), tau=float(p["pde_tau"]))
            return run_pde(cfg)
        res = runner.run(f"pde/{dynamics}", cell)
        if res is not None:
            kl_series[dynamics] = res
    if len(kl_series) == 3:
        times = kl_series["fpe"].times
        idx = _strided(times, None, p["csv_stride"])
        write_csv(out / "kl_decay.csv", ("t", "fpe", "bde", "bdl-fpe"),
                  ((times[i], kl_series["fpe"].kl[i], kl_series["bde"].kl[i],
                    kl_series["bdl-fpe"].kl[i]) for i in idx))

    mean_ref, var_ref = quadrature_moments_1d(target, int(p["quadrature_cells"]))
    observables = [
        ObservableSpec("mean", "coordinate-mean", mean_ref,
                       f"fine-grid quadrature (n={p['quadrature_cells']})", axis=0),
        ObservableSpec("variance", "coordinate-variance", var_ref,
                       f"fine-grid quadrature (n={p['quadrature_cells']})", axis=0),
    ]

    estimate_rows = []
    mse_rows = []
    for n, method in itertools.product(tuple(int(v) for v in p["particle_counts"]),
                                       ("bdls", "ula")):
        per_obs = {o.name: [] for o in observables}
        for s_idx in spec.seeds:
            cell_seed = derive_cell_seed(int(p["base_seed"]), method, s_idx)

            def cell(n=n, method=method, s_idx=s_idx, cell_seed=cell_seed):
                rng = RngStream(cell_seed, 1).generator()
                start = rng.normal(float(p["init_mean"]),
                                   np.sqrt(float(p["init_var"])), size=(n, 1))
                return _particle_cell(target, method, cell_seed, n, p, start, 0)

            res = runner.run(f"particles/{method}/N{n}/s{s_idx}", cell)
            if res is None:
                continue
            for obs in observables:
                est = empirical_estimate(res.final.positions, obs)
                per_obs[obs.name].append(est)
                estimate_rows.append((method, n, s_idx, obs.name, est, obs.reference))
            if s_idx == spec.seeds[0]:
                write_snapshot(out / "snapshots" / f"{method}_N{n}_final.csv",
                               int(p["n_iterations"]), res.final.positions)
                if method == "bdls":
                    write_events(out / "events" / f"{method}_N{n}_s{s_idx}.csv", res)
        for obs in observables:
            if per_obs[obs.name]:
                mse_rows.append((method, n, obs.name,
                                 mse_over_runs(per_obs[obs.name], obs.reference),
                                 len(per_obs[obs.name]), obs.reference))
    write_csv(out / "estimates.csv",
              ("method", "n_particles", "seed_index", "observable", "estimate",
               "reference"), estimate_rows)
    write_csv(out / "mse_vs_N.csv",
              ("method", "n_particles", "observable", "mse", "n_seeds", "reference"),
              sorted(mse_rows))


def _run_example2(spec: ExperimentSpec, out: Path, runner: _CellRunner):
    p = spec.params
    gm = GaussianMixture2D()
    observables = example2_observables(gm)
    record_every = int(p["record_every"])
    snapshot_every = int(p["snapshot_every"])
    if snapshot_every and record_every and snapshot_every % record_every:
        raise ConfigError("snapshot_every must be a multiple of record_every")

    error_rows = []
    occupancy_rows = []
    for method in ("bdls", "ula"):
        for s_idx in spec.seeds:
            cell_seed = derive_cell_seed(int(p["base_seed"]), method, s_idx)

            def cell(method=method, cell_seed=cell_seed):
                rng = RngStream(cell_seed, 1).generator()
                start = sample_diag_gaussian((0.0, 8.0), (0.3, 0.3),
                                             int(p["n_particles"]), rng)
                return _particle_cell(gm, method, cell_seed,
                                      int(p["n_particles"]), p, start, record_every)

            res = runner.run(f"particles/{method}/s{s_idx}", cell)
            if res is None:
                continue
            for iteration, positions in res.snapshots:
                for obs in observables:
                    est = empirical_estimate(positions, obs)
                    error_rows.append((method, s_idx, iteration, obs.name, est,
                                       obs.reference, abs(est - obs.reference)))
                occ = mode_occupancy(positions, gm.means, float(p["mode_radius"]))
                for m, frac in enumerate(occ.fractions):
                    occupancy_rows.append((method, s_idx, iteration, f"mode{m}", frac))
                occupancy_rows.append((method, s_idx, iteration, "unassigned",
                                       occ.unassigned))
                if snapshot_every and iteration % snapshot_every == 0:
                    write_snapshot(
                        out / "snapshots" / f"{method}_s{s_idx}_iter{iteration}.csv",
                        iteration, positions)
            if method == "bdls":
                write_events(out / "events" / f"{method}_s{s_idx}.csv", res)
    write_csv(out / "abs_error_vs_iter.csv",
              ("method", "seed_index", "iteration", "observable", "estimate",
               "reference", "abs_error"), error_rows)
    write_csv(out / "occupancy.csv",
              ("method", "seed_index", "iteration", "mode", "fraction"),
              occupancy_rows)


def _run_example3(spec: ExperimentSpec, out: Path, runner: _CellRunner):
    p = spec.params
    dataset = example3_dataset(p)
    (out / "dataset.txt").write_text("".join(f"{repr(float(v))}\n" for v in dataset))
    target = BayesGmmPosterior(dataset)
    modes = example3_permutation_modes()
    record_every = int(p["record_every"])
    snapshot_every = int(p["snapshot_every"])
    if snapshot_every and record_every and snapshot_every % record_every:
        raise ConfigError("snapshot_every must be a multiple of record_every")

    occupancy_rows = []
    for method in ("bdls", "ula"):
        for s_idx in spec.seeds:
            cell_seed = derive_cell_seed(int(p["base_seed"]), method, s_idx)

            def cell(method=method, cell_seed=cell_seed):
                rng = RngStream(cell_seed, 1).generator()
                start = example3_initial_positions(int(p["n_particles"]), rng)
                return _particle_cell(target, method, cell_seed,
                                      int(p["n_particles"]), p, start,
                                      record_every, stepper="tamed-ula")

            res = runner.run(f"particles/{method}/s{s_idx}", cell)
            if res is None:
                continue
            for iteration, positions in res.snapshots:
                occ = mode_occupancy(positions[:, 2:4], modes, float(p["mode_radius"]))
                for m, frac in enumerate(occ.fractions):
                    occupancy_rows.append((method, s_idx, iteration, f"mode{m}", frac))
                occupancy_rows.append((method, s_idx, iteration, "unassigned",
                                       occ.unassigned))
                if snapshot_every and iteration % snapshot_every == 0:
                    write_snapshot(
                        out / "snapshots" / f"{method}_s{s_idx}_iter{iteration}.csv",
                        iteration, positions)
            if method == "bdls":
                write_events(out / "events" / f"{method}_s{s_idx}.csv", res)
    write_csv(out / "occupancy.csv",
              ("method", "seed_index", "iteration", "mode", "fraction"),
              occupancy_rows)
    write_csv(out / "modes.csv", ("mode", "mu1", "mu2"),
              ((f"mode{m}", modes[m, 0], modes[m, 1]) for m in range(len(modes))))


def _run_double_well(spec: ExperimentSpec, out: Path, runner: _CellRunner):
    p = spec.params
    kl_rows = []
    rate_rows = []
    for eps in p["epsilons"]:
        target = DoubleWellTorus1D(float(eps))
        cases = (
            ("fpe", float(p["t_final_fpe"]), ("indicator-target", -1.0, 0.0)),
            ("bdl-fpe", float(p["t_final_bdl"]), ("indicator-target", -1.0, 0.0)),
            ("bde", float(p["t_final_bde"]), ("gaussian", 0.0, 0.2)),
        )
        for dynamics, t_final, init in cases:
            def cell(target=target, dynamics=dynamics, t_final=t_final, init=init):
                cfg = PdeConfig(target, dynamics, t_final, init,
                                n_cells=int(p["n_cells"]), tau=float(p["tau"]))
                return run_pde(cfg)
            res = runner.run(f"pde/eps{eps}/{dynamics}", cell)
            if res is None:
                continue
            for i in _strided(res.times, None, p["csv_stride"]):
                kl_rows.append((eps, dynamics, res.times[i], res.kl[i]))
            if dynamics in ("fpe", "bdl-fpe"):
                rate = fit_exponential_rate(res.times, res.kl,
                                            value_max=float(p["fit_kl_max"]),
                                            value_min=float(p["fit_kl_min"]))
                rate_rows.append((eps, dynamics, rate, p["fit_kl_max"],
                                  p["fit_kl_min"]))
    write_csv(out / "kl_decay.csv", ("epsilon", "dynamics", "t", "kl"), kl_rows)
    write_csv(out / "rates.csv",
              ("epsilon", "dynamics", "rate", "fit_kl_max", "fit_kl_min"), rate_rows)


def _run_uniform_torus(spec: ExperimentSpec, out: Path, runner: _CellRunner):
    p = spec.params
    kl_rows = []
    rate_rows = []
    for side in p["side_lengths"]:
        target = UniformTorus(1, float(side))
        init = ("gaussian", float(side) / 4.0, 0.05 * float(side) ** 2)

        def cell(target=target, init=init):
            cfg = PdeConfig(target, "fpe", float(p["t_final"]), init,
                            n_cells=int(p["n_cells"]), tau=float(p["tau"]))
            return run_pde(cfg)

        res = runner.run(f"pde/L{side}/fpe", cell)
        if res is None:
            continue
        for i in _strided(res.times, None, p["csv_stride"]):
            kl_rows.append((side, res.times[i], res.kl[i]))
        rate = fit_exponential_rate(res.times, res.kl,
                                    value_max=float(p["fit_kl_max"]),
                                    value_min=float(p["fit_kl_min"]))
        rate_rows.append((side, rate))
    write_csv(out / "kl_decay.csv", ("side", "t", "kl"), kl_rows)
    write_csv(out / "rates.csv", ("side", "rate"), rate_rows)


def _run_bde_oracle(spec: ExperimentSpec, out: Path, runner: _CellRunner):
    p = spec.params
    target = TorusMultimodal1D()

    def cell():
        dyn = GridDynamics(target, int(p["n_cells"]), float(p["tau"]))
        rho0 = resolve_initial(dyn.pi, ("gaussian", float(p["init_mean"]),
                                        float(p["init_var"])))
        tau = float(p["tau"])
        checks = sorted(float(t) for t in p["check_times"])
        n_steps = int(round(checks[-1] / tau))
        rows = []
        rho = rho0
        for step in range(1, n_steps + 1):
            rho = dyn.bde_substep(rho)
            t = step * tau
            if any(abs(t - c) < 0.5 * tau for c in checks):
                oracle = bde_closed_form(dyn.pi, rho0, t)
                rows.append((t, float(np.abs(rho.values - oracle.values).max())))
        return rows

    rows = runner.run("pde/bde-oracle", cell)
    write_csv(out / "oracle_error.csv", ("t", "sup_error"), rows or [])


_RUNNERS = {
    "example1": _run_example1,
    "example1-wide": _run_example1,
    "example2": _run_example2,
    "example3": _run_example3,
    "double-well-rate": _run_double_well,
    "uniform-torus": _run_uniform_torus,
    "bde-oracle": _run_bde_oracle,
}


def resolve_out_dir(spec: ExperimentSpec, override=None) -> Path:
    if override:
        return Path(override)
    if spec.out_dir:
        return Path(spec.out_dir)
    root = os.environ.get("BDLS_OUT_ROOT", "runs")
    return Path(root) / spec.experiment_id


def run_experiment(spec: ExperimentSpec, out_dir=None) -> Path:
    """Execute the experiment matrix and write all artifacts.

    A failed (method, seed) cell is recorded in the manifest and does not
    abort remaining cells.  Re-running from the written manifest
    reproduces every CSV byte for byte.
    """
    out = resolve_out_dir(spec, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = _CellRunner()
    _RUNNERS[spec.experiment_id](spec, out, runner)
    manifest = {
        "experiment": spec.experiment_id,
        "version": _pkg_version,
        "backend": BACKEND,
        "seeds": list(spec.seeds),
        "params": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in spec.params.items()},
        "cells": runner.cells,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def _read_csv(path: Path):
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        return list(reader)


def report(artifact_dir) -> str:
    """Human-readable summary of a finished experiment directory."""
    out = Path(artifact_dir)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json under {out}")
    manifest = json.loads(manifest_path.read_text())
    lines = [f"experiment: {manifest['experiment']}  "
             f"(version {manifest['version']}, backend {manifest['backend']})",
             f"seeds: {manifest['seeds']}"]
    failed = [c for c in manifest["cells"] if c["status"] != "ok"]
    lines.append(f"cells: {len(manifest['cells'])} total, {len(failed)} failed")
    for c in failed:
        lines.append(f"  FAILED {c['name']}: {c['error']}")

    mse_path = out / "mse_vs_N.csv"
    if mse_path.exists():
        rows = _read_csv(mse_path)
        table = {}
        for r in rows:
            table[(r["observable"], int(r["n_particles"]), r["method"])] = float(r["mse"])
        lines.append("MSE vs N (final iterate, over seeds):")
        ns = sorted({int(r["n_particles"]) for r in rows})
        for obs in sorted({r["observable"] for r in rows}):
            for n in ns:
                b = table.get((obs, n, "bdls"))
                u = table.get((obs, n, "ula"))
                if b is None or u is None:
                    continue
                verdict = "yes" if b < u else "NO"
                lines.append(f"  {obs:9s} N={n:<5d} BDLS {b:.6g}  ULA {u:.6g}  "
                             f"BDLS<ULA: {verdict}")

    kl_path = out / "kl_decay.csv"
    if kl_path.exists():
        rows = _read_csv(kl_path)
        if rows and "fpe" in rows[0]:
            last = rows[-1]
            lines.append("final KL: " + "  ".join(
                f"{k}={float(last[k]):.3e}" for k in ("fpe", "bde", "bdl-fpe")))

    rates_path = out / "rates.csv"
    if rates_path.exists():
        rows = _read_csv(rates_path)
        lines.append("fitted KL decay rates:")
        for r in rows:
            desc = " ".join(f"{k}={r[k]}" for k in r if k in
                            ("epsilon", "dynamics", "side"))
            lines.append(f"  {desc} rate={float(r['rate']):.6g}")

    occ_path = out / "occupancy.csv"
    if occ_path.exists():
        rows = _read_csv(occ_path)
        final_iter = max(int(r["iteration"]) for r in rows)
        lines.append(f"mode occupancy at iteration {final_iter} (mean over seeds):")
        for method in ("bdls", "ula"):
            sel = [r for r in rows if r["method"] == method
                   and int(r["iteration"]) == final_iter and r["mode"] != "unassigned"]
            if not sel:
                continue
            modes = sorted({r["mode"] for r in sel})
            means = []
            for m in modes:
                vals = [float(r["fraction"]) for r in sel if r["mode"] == m]
                means.append(f"{m}={np.mean(vals):.3f}")
            lines.append(f"  {method}: " + "  ".join(means))

    oracle_path = out / "oracle_error.csv"
    if oracle_path.exists():
        rows = _read_csv(oracle_path)
        worst = max(float(r["sup_error"]) for r in rows)
        lines.append(f"birth-death flow vs closed form: max sup error {worst:.3e}")

    return "\n".join(lines)
