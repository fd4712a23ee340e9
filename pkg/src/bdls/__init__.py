"""Langevin particle sampling accelerated by birth-death resampling.

The package pairs an interacting-particle sampler (parallel ULA or tamed
ULA plus a population-conserving kill/duplicate sweep) with deterministic
1D grid solvers for the corresponding density evolutions, a set of
benchmark targets, and a configuration-driven experiment harness.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND, NUMBA_ENABLED
from .dynamics import (
    Ensemble,
    EventLog,
    RateVector,
    RngStream,
    SamplerConfig,
    SamplerResult,
    bdls_iteration,
    birth_death_sweep,
    compute_rates,
    run_sampler,
    tamed_drift,
    tamed_ula_step,
    ula_step,
)
from .experiments import (
    EXPERIMENT_IDS,
    ExperimentSpec,
    default_params,
    default_seeds,
    derive_cell_seed,
    load_config,
    report,
    run_experiment,
)
from .geometry import Box, DomainGeometry, Euclidean, Torus, project
from .kde import GaussianKernel, kde_all_points, kde_at_point, kernel_eval
from .metrics import (
    ObservableSpec,
    empirical_estimate,
    fit_exponential_rate,
    kde_marginal_curve,
    mode_occupancy,
    mse_over_runs,
    quadrature_moments_1d,
)
from .pde import (
    GridDensity,
    GridDynamics,
    PdeConfig,
    PdeResult,
    bde_closed_form,
    bde_substep,
    bdl_fpe_step,
    discretize_target,
    fpe_step,
    kl_divergence_grid,
    run_pde,
)
from .targets import (
    BayesGmmPosterior,
    DoubleWellTorus1D,
    GaussianMixture2D,
    TargetDensity,
    TorusMultimodal1D,
    UniformTorus,
    exact_sample,
    generate_synthetic_dataset,
    sample_diag_gaussian,
)
