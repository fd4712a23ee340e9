"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they print.  Three sub-assertions are known to fail on genuinely
measured dynamics and are deliberately left red rather than loosened;
their analyses live in the project notes:

* criterion 4: the combined-flow KL tail rate at eps=0.25 carries a
  non-negligible diffusion contribution (spectral gap 0.809), so the
  rate change across the mandated eps pair is ~43%, not < 30%;
* criterion 7: at N=25 the kernel self-term floor K(0)/N exceeds the
  shallow modes' peak density, those modes go extinct, and BDLS MSE
  lands above ULA's at that single N;
* example-3 scaled study: from the mu ~ U[3,7] initialization only the
  two -5-free permutation modes are reachable within 2e4 iterations, so
  the occupied-mode count ties between methods (BDLS holds ~1.5x the
  occupied mass).
"""

import hashlib
import time

import numpy as np
import pytest

from bdls import _kernels
from bdls import targets as tg
from bdls.dynamics import (
    Ensemble,
    RngStream,
    SamplerConfig,
    bdls_iteration,
    run_sampler,
    tamed_drift,
)
from bdls.experiments import (
    default_params,
    derive_cell_seed,
    example3_initial_positions,
    example3_dataset,
    example3_permutation_modes,
    load_config,
    run_experiment,
)
from bdls.kde import GaussianKernel
from bdls.metrics import (
    fit_exponential_rate,
    kde_marginal_curve,
    mode_occupancy,
    mse_over_runs,
    quadrature_moments_1d,
)
from bdls.pde import GridDynamics, PdeConfig, bde_closed_form, resolve_initial, run_pde
from bdls.targets import sample_diag_gaussian

from conftest import bayes_interior_points, gradient_oracle_max_err


def _report(num, passed: bool, detail: str):
    tag = "PASS" if passed else "FAIL"
    print(f"[{tag}] criterion {num}: {detail}", flush=True)
    assert passed, f"criterion {num}: {detail}"


@pytest.fixture(scope="module", autouse=True)
def _warm_kernels():
    # compile the jitted kernels before any timed criterion runs
    pos = np.zeros((4, 2))
    _kernels.kde_all(pos, np.zeros(2), 1.0, 1.0)
    k = np.empty(4, np.int64)
    _kernels.bd_sweep(pos, np.zeros(4), 0.1, np.zeros(4), np.zeros(4),
                      k, k.copy(), np.zeros(4))
    _kernels.bgmm_logpost_grad(np.array([[.3, .3, 0., 1., 2., 1., 1., 1., 1.]]),
                               np.zeros(4), 0.0, 1.0, 2.0, 0.02, 1.0)


@pytest.fixture(scope="module")
def example1_target():
    return tg.TorusMultimodal1D()


@pytest.fixture(scope="module")
def example1_pde_runs(example1_target):
    init = ("gaussian", 0.0, 0.2)
    return {dyn: run_pde(PdeConfig(example1_target, dyn, 10.0, init))
            for dyn in ("fpe", "bde", "bdl-fpe")}


def test_c01_bde_oracle_equivalence(example1_target):
    t0 = time.perf_counter()
    dyn = GridDynamics(example1_target, 500, 5e-3)
    rho0 = resolve_initial(dyn.pi, ("gaussian", 0.0, 0.2))
    checks = {0.5, 1.0, 2.0, 5.0}
    worst = 0.0
    rho = rho0
    for step in range(1, 1001):
        rho = dyn.bde_substep(rho)
        t = step * 5e-3
        if any(abs(t - c) < 2.5e-3 for c in checks):
            oracle = bde_closed_form(dyn.pi, rho0, t)
            worst = max(worst, float(np.abs(rho.values - oracle.values).max()))
    elapsed = time.perf_counter() - t0
    _report(1, worst <= 1e-9 and elapsed < 5.0,
            f"stepped vs closed-form sup error {worst:.2e} (tol 1e-9), "
            f"{elapsed:.2f}s (limit 5s)")


def test_c02_kl_monotonicity(example1_pde_runs):
    t0 = time.perf_counter()
    worst = -np.inf
    cases = [f"example1/{d}" for d in example1_pde_runs]
    increments = {f"example1/{d}": float(np.diff(r.kl).max())
                  for d, r in example1_pde_runs.items()}
    dw = tg.DoubleWellTorus1D(0.25)
    for dynamics, t_final, init in (
            ("fpe", 30.0, ("indicator-target", -1.0, 0.0)),
            ("bdl-fpe", 25.0, ("indicator-target", -1.0, 0.0)),
            ("bde", 25.0, ("gaussian", 0.0, 0.2))):
        res = run_pde(PdeConfig(dw, dynamics, t_final, init))
        increments[f"double-well/{dynamics}"] = float(np.diff(res.kl).max())
    worst = max(increments.values())
    elapsed = time.perf_counter() - t0
    _report(2, worst <= 1e-8 and elapsed < 60.0,
            f"max per-step KL increase {worst:.2e} over {len(increments)} "
            f"trajectories (tol 1e-8), {elapsed:.1f}s (limit 60s)")


def test_c03_acceleration(example1_pde_runs):
    t0 = time.perf_counter()
    t_hit = example1_pde_runs["bdl-fpe"].first_time_below(1e-2)
    fpe_kl = example1_pde_runs["fpe"].kl_at(t_hit)
    ratio = fpe_kl / 1e-2
    elapsed = time.perf_counter() - t0
    _report(3, ratio >= 5.0 and elapsed < 120.0,
            f"combined flow reaches KL=1e-2 at t={t_hit:.3f}; diffusion-only "
            f"KL there {fpe_kl:.3f} = {ratio:.1f}x (need >= 5x)")


def test_c04_barrier_independence():
    t0 = time.perf_counter()
    rates = {}
    for eps in (0.25, 0.125):
        dw = tg.DoubleWellTorus1D(eps)
        init = ("indicator-target", -1.0, 0.0)
        fpe = run_pde(PdeConfig(dw, "fpe", 1500.0, init))
        bdl = run_pde(PdeConfig(dw, "bdl-fpe", 25.0, init))
        rates[eps] = (
            fit_exponential_rate(fpe.times, fpe.kl, value_max=1e-3, value_min=1e-8),
            fit_exponential_rate(bdl.times, bdl.kl, value_max=1e-3, value_min=1e-8),
        )
    fpe_factor = rates[0.25][0] / rates[0.125][0]
    bdl_change = abs(rates[0.25][1] - rates[0.125][1]) / max(rates[0.25][1],
                                                             rates[0.125][1])
    elapsed = time.perf_counter() - t0
    _report(4, fpe_factor >= 3.0 and bdl_change < 0.30 and elapsed < 300.0,
            f"diffusion-rate degradation {fpe_factor:.1f}x (need >= 3); "
            f"combined-rate change {bdl_change:.0%} (need < 30%); "
            f"rates fpe {rates[0.25][0]:.3f}->{rates[0.125][0]:.4f}, "
            f"bdl {rates[0.25][1]:.3f}->{rates[0.125][1]:.3f}; "
            f"{elapsed:.0f}s (limit 300s)")


def test_c05_population_and_centering(example1_target):
    ok = True
    detail = []
    for s in range(5):
        seed = derive_cell_seed(2026, "bdls", s)
        start = RngStream(seed, 1).generator().normal(0, np.sqrt(0.2), (100, 1))
        cfg = SamplerConfig(n_particles=100, dt=0.03, n_iterations=1000,
                            kernel_width=0.05, seed=seed)
        res = run_sampler(example1_target, cfg, start)
        pop_ok = bool(np.all(res.population == 100))
        bound = 1e-10 * 100 * np.maximum(res.max_abs_rate, 1e-300)
        cent_ok = bool(np.all(res.centering_residual <= bound))
        ok = ok and pop_ok and cent_ok
        detail.append(f"s{s}: pop {'ok' if pop_ok else 'BAD'}, "
                      f"max residual {res.centering_residual.max():.1e}")
    _report(5, ok, "population exactly 100 and rates centered at every "
                   f"iteration over 5 seeds ({'; '.join(detail[:2])} ...)")


def test_c06_equilibrium_neutrality():
    t0 = time.perf_counter()
    gm = tg.GaussianMixture2D()
    seed = derive_cell_seed(2026, "bdls-equilibrium", 0)
    ens = Ensemble(gm.exact_sample(10_000, RngStream(seed, 1).generator()),
                   gm.geometry)
    cfg = SamplerConfig(n_particles=10_000, dt=1e-3, n_iterations=1,
                        kernel_width=0.3, seed=seed)
    kernel = GaussianKernel(0.3, 2)
    run_rng = RngStream(seed).generator()
    # radius 3.0 captures >= 96.6% of each elongated component, putting the
    # exact-sample baseline at 0.242-0.247 per mode (radius 1.5 would cap
    # the baseline itself below the 0.25 +- 0.03 band)
    lo, hi = np.ones(4), np.zeros(4)
    for _ in range(1000):
        occ = mode_occupancy(ens.positions, gm.means, 3.0).fractions
        lo = np.minimum(lo, occ)
        hi = np.maximum(hi, occ)
        ens, _, _ = bdls_iteration(ens, gm, kernel, cfg, run_rng)
    occ = mode_occupancy(ens.positions, gm.means, 3.0).fractions
    lo, hi = np.minimum(lo, occ), np.maximum(hi, occ)
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(lo >= 0.22) and np.all(hi <= 0.28))
    _report(6, ok,
            f"per-mode occupancy stayed within [{lo.min():.3f}, {hi.max():.3f}] "
            f"(band 0.25 +- 0.03) over 1000 iterations at N=10000; "
            f"{elapsed:.0f}s")


def test_c07_example1_mse_ordering(example1_target):
    t0 = time.perf_counter()
    mean_ref, var_ref = quadrature_moments_1d(example1_target, 100_000)
    lines = []
    all_ok = True
    for n in (25, 50, 100, 200):
        per = {}
        for method in ("bdls", "ula"):
            means, variances = [], []
            for s in range(20):
                seed = derive_cell_seed(2026, method, s)
                start = RngStream(seed, 1).generator().normal(
                    0, np.sqrt(0.2), (n, 1))
                cfg = SamplerConfig(n_particles=n, dt=0.03, n_iterations=2000,
                                    kernel_width=0.05, seed=seed,
                                    birth_death=(method == "bdls"))
                res = run_sampler(example1_target, cfg, start)
                p = res.final.positions[:, 0]
                means.append(float(p.mean()))
                variances.append(float(((p - p.mean()) ** 2).mean()))
            per[method] = (mse_over_runs(means, mean_ref),
                           mse_over_runs(variances, var_ref))
        ok = per["bdls"][0] < per["ula"][0] and per["bdls"][1] < per["ula"][1]
        all_ok = all_ok and ok
        lines.append(f"N={n}: mse(mean) {per['bdls'][0]:.3f} vs "
                     f"{per['ula'][0]:.3f}, mse(var) {per['bdls'][1]:.2f} vs "
                     f"{per['ula'][1]:.2f} -> {'ok' if ok else 'FAIL'}")
    elapsed = time.perf_counter() - t0
    _report(7, all_ok and elapsed < 600.0,
            f"BDLS-below-ULA at every N over 20 seeds, J=2000 "
            f"({'; '.join(lines)}); {elapsed:.0f}s (limit 600s)")


@pytest.fixture(scope="module")
def example2_runs():
    gm = tg.GaussianMixture2D()
    runs = {}
    for method in ("bdls", "ula"):
        for s in range(5):
            seed = derive_cell_seed(2026, method, s)
            start = sample_diag_gaussian((0.0, 8.0), (0.3, 0.3), 1000,
                                         RngStream(seed, 1).generator())
            # one BDLS seed continues to 2e4 for the marginal-curve check;
            # the first 1e4 iterations are identical either way
            n_iter = 20_000 if (method == "bdls" and s == 0) else 10_000
            cfg = SamplerConfig(n_particles=1000, dt=1e-3, n_iterations=n_iter,
                                kernel_width=0.3, seed=seed,
                                birth_death=(method == "bdls"),
                                snapshot_every=10_000)
            runs[(method, s)] = run_sampler(gm, cfg, start)
    return runs


def test_c08_example2_mode_discovery(example2_runs):
    gm = tg.GaussianMixture2D()
    occ = {m: [] for m in ("bdls", "ula")}
    for (method, s), res in example2_runs.items():
        positions = res.snapshot_at(10_000)
        occ[method].append(mode_occupancy(positions, gm.means, 1.5).fractions)
    bdls_mean = np.mean(occ["bdls"], axis=0)
    ula_mean = np.mean(occ["ula"], axis=0)
    bottom = 1  # component centered at (0, 2)
    ok = bool(np.all(bdls_mean >= 0.10) and ula_mean[bottom] < bdls_mean[bottom])
    _report(8, ok,
            f"BDLS occupancy {np.round(bdls_mean, 3).tolist()} (each >= 0.10); "
            f"bottom mode ULA {ula_mean[bottom]:.3f} < BDLS "
            f"{bdls_mean[bottom]:.3f} (5-seed means at iteration 1e4)")


def test_example2_bdls_marginal_trimodal(example2_runs):
    # long-run sanity on the y-marginal: modes near y = 2, 5 and 8
    res = example2_runs[("bdls", 0)]
    positions = res.snapshot_at(20_000)
    grid = np.linspace(-1.0, 12.0, 651)
    curve = kde_marginal_curve(positions, 1, grid, bandwidth=0.35)
    for y0 in (2.0, 5.0, 8.0):
        window = (grid > y0 - 1.0) & (grid < y0 + 1.0)
        inside = curve[window].max()
        edge = max(curve[np.argmin(np.abs(grid - (y0 - 1.5)))],
                   curve[np.argmin(np.abs(grid - (y0 + 1.5)))])
        assert inside > 1.5 * edge, f"no marginal mode near y={y0}"


def test_c09_gradient_oracle(bayes_posterior):
    t0 = time.perf_counter()
    gen = np.random.default_rng(909)
    cases = [
        ("uniform-torus", tg.UniformTorus(2, 4.0),
         gen.uniform(0.2, 3.8, (100, 2))),
        ("four-well-torus", tg.TorusMultimodal1D(),
         gen.uniform(-2 * np.pi, 2 * np.pi, (100, 1))),
        ("double-well", tg.DoubleWellTorus1D(0.125),
         gen.uniform(-1, 1, (100, 1))),
        ("mixture-2d", tg.GaussianMixture2D(),
         gen.uniform((-6, -1), (6, 11), (100, 2))),
        ("bayes-posterior", bayes_posterior, bayes_interior_points(100, gen)),
    ]
    worst = {}
    for name, target, pts in cases:
        worst[name] = gradient_oracle_max_err(target, pts)
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-5 for v in worst.values()) and elapsed < 30.0
    _report(9, ok,
            "max rel errors vs central differences: "
            + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
            + f" (tol 1e-5); {elapsed:.1f}s (limit 30s)")


def test_c10_tamed_drift_bound():
    gen = np.random.default_rng(1010)
    n = 1_000_000
    mags = 10.0 ** gen.uniform(-3, 6, n)
    dirs = gen.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    g = dirs * mags[:, None]
    worst_rel = 0.0
    below_one = True
    for dt in (1.5e-6, 0.03):
        norms = np.linalg.norm(tamed_drift(g, dt), axis=1)
        expected = dt * mags / (1.0 + dt * mags)
        below_one = below_one and bool(np.all(norms < 1.0))
        worst_rel = max(worst_rel,
                        float(np.abs(norms / expected - 1.0).max()))
    _report(10, below_one and worst_rel <= 1e-12,
            f"1e6 gradients x 2 step sizes: |drift| < 1 and matches "
            f"dt|g|/(1+dt|g|) to {worst_rel:.1e} (tol 1e-12)")


def test_c11_determinism(tmp_path):
    cfg = tmp_path / "cell.cfg"
    cfg.write_text("""
[experiment]
id = example1
seeds = 0

[params]
particle_counts = 25
n_iterations = 80
pde_t_final = 0.5
csv_stride = 10
""")
    spec = load_config(cfg)
    out1 = run_experiment(spec, out_dir=tmp_path / "a")
    out2 = run_experiment(load_config(out1 / "manifest.json"),
                          out_dir=tmp_path / "b")

    def digests(root):
        return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(root.rglob("*.csv"))}

    d1, d2 = digests(out1), digests(out2)
    _report(11, bool(d1) and d1 == d2,
            f"manifest replay reproduced {len(d1)} CSV files byte-for-byte")


def test_c12_uniform_torus_spectral_gap():
    rates = {}
    for side in (4.0, 8.0):
        t = tg.UniformTorus(1, side)
        init = ("gaussian", side / 4.0, 0.05 * side**2)
        res = run_pde(PdeConfig(t, "fpe", 30.0, init))
        rates[side] = fit_exponential_rate(res.times, res.kl,
                                           value_max=1e-4, value_min=1e-8)
    ratio = rates[4.0] / rates[8.0]
    dev = abs(ratio / 4.0 - 1.0)
    _report(12, dev <= 0.25,
            f"fitted rate ratio L=4 vs L=8 is {ratio:.3f}; "
            f"(2pi/L)^2 predicts 4, deviation {dev:.1%} (tol 25%)")


def test_example3_scaled_mode_exploration(bayes_posterior):
    # desk-scale substitute for the full Bayesian-mixture comparison
    t0 = time.perf_counter()
    params = default_params("example3")
    dataset = example3_dataset(params)
    np.testing.assert_array_equal(dataset, bayes_posterior.dataset)
    modes = example3_permutation_modes()
    counts = {"bdls": [], "ula": []}
    masses = {"bdls": [], "ula": []}
    for method in ("bdls", "ula"):
        for s in range(3):
            seed = derive_cell_seed(2026, method, s)
            start = example3_initial_positions(500, RngStream(seed, 1).generator())
            cfg = SamplerConfig(n_particles=500, dt=1.5e-6, n_iterations=20_000,
                                kernel_width=1.1, seed=seed,
                                birth_death=(method == "bdls"),
                                stepper="tamed-ula")
            res = run_sampler(bayes_posterior, cfg, start)
            occ = mode_occupancy(res.final.positions[:, 2:4], modes, 1.5)
            counts[method].append(int((occ.fractions >= 0.02).sum()))
            masses[method].append(float(occ.fractions.sum()))
    bdls_count = float(np.mean(counts["bdls"]))
    ula_count = float(np.mean(counts["ula"]))
    elapsed = time.perf_counter() - t0
    ok = bdls_count >= 2.0 and ula_count < bdls_count
    _report("example3-scaled", ok,
            f"permutation modes occupied (mean over 3 seeds): BDLS "
            f"{bdls_count:.2f} (need >= 2), ULA {ula_count:.2f} (need < BDLS); "
            f"occupied mass BDLS {np.mean(masses['bdls']):.3f} vs ULA "
            f"{np.mean(masses['ula']):.3f}; {elapsed:.0f}s")
