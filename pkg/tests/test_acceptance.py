"""Acceptance criteria.

Each test records one PASS/FAIL line (echoed in the pytest terminal
summary) and then asserts.  Tolerances are pinned; criteria that need
long runs use the default configuration at refinement 1 unless the
criterion names a refinement.
"""

import time
import warnings

import numpy as np
import pytest
from scipy.optimize import brentq

from atriafit.calibration import Observation, hm_wave, sobol_design, stretch_acceptance, stretch_sampler, table1_space
from atriafit.cli import main
from atriafit.cohortstats import design_matrix, fit_lmm, paired_ttest_bonferroni
from atriafit.geometry import build_hemisphere_mesh, build_sphere_mesh, enclosed_volume
from atriafit.material import GuccioneParams
from atriafit.mechanics import (
    MMHG_TO_KPA,
    LoadingParameters,
    MembraneModel,
    RegionalMaterialMap,
    params_to_model_inputs,
    solve_equilibrium,
    unload,
)
from atriafit.pipeline import Pipeline, load_config, read_header, verify_synthetic
from atriafit.pipeline.artifacts import read_table
from atriafit.pipeline.stages import load_final_wave
from atriafit.sensitivity import saltelli_design, sobol_indices
from test_cohortstats import PAIRED_T, synthetic_table
from test_mechanics import _fd_gradient, _thin_sphere_pressure
from test_sensitivity import ishigami, ishigami_analytic

pytestmark = pytest.mark.slow

SPHERE_PRESSURES_KPA = (0.25, 0.5, 1.0, 1.5, 2.0)
SPHERE_TOL = 0.02
SPHERE_RUNTIME_S = 120.0
GRADIENT_TOL = 1e-6
UNLOAD_TOL = 0.01
R2_MIN, ISE_MIN = 0.72, 0.89
WAVE1_RUNTIME_S = 4 * 3600.0
SOBOL_TOL = 0.02
REDUCTION_MIN = 0.45
POSTERIOR_MEAN_TOL, POSTERIOR_COV_TOL = 0.05, 0.10
MAP_ALPHA_MAX = 1.5
VERIFY_RUNTIME_S = 12 * 3600.0
OLS_REL_TOL, COVERAGE_MIN, PAIRED_TOL = 1e-6, 0.95, 1e-10


# -- 1 -----------------------------------------------------------------------------


def test_criterion_1_sphere_inflation(acceptance):
    mesh = build_sphere_mesh(20.0, 2, 2.0)
    mats = RegionalMaterialMap.uniform(GuccioneParams(C=1.7, b_f=4.0, b_t=4.0, b_ft=4.0))
    model = MembraneModel(mesh, mats, LoadingParameters(), springs=False)
    errors = []
    t0 = time.perf_counter()
    for p in SPHERE_PRESSURES_KPA:
        x = solve_equilibrium(model, p)
        lam_num = np.mean(np.linalg.norm(x - x.mean(0), axis=1)) / 20.0
        lam = brentq(lambda v: _thin_sphere_pressure(v) - p, 1.0, 3.0)
        errors.append(abs(lam_num - lam) / lam)
    elapsed = time.perf_counter() - t0
    ok = max(errors) < SPHERE_TOL and elapsed < SPHERE_RUNTIME_S
    acceptance(1, ok, f"sphere stretch max rel. error {max(errors):.2e} (< {SPHERE_TOL}) over "
                      f"{len(errors)} pressures, {elapsed:.1f} s at refinement 2 (< {SPHERE_RUNTIME_S:.0f} s)")
    assert ok


# -- 2 -----------------------------------------------------------------------------


def test_criterion_2_gradient_audit(acceptance):
    space = table1_space()
    worst = 0.0
    count = 0
    for refinement in (1, 2):
        mesh = build_hemisphere_mesh(20.0, refinement, 2.0)
        rng = np.random.default_rng(100 + refinement)
        for state in range(20):
            params = space.as_dict(space.to_physical(rng.random(space.dim)))
            mats, load = params_to_model_inputs(params)
            model = MembraneModel(mesh, mats, load)
            x = mesh.vertices + rng.normal(scale=0.3, size=mesh.vertices.shape)
            x[mesh.rim_vertex_ids] = mesh.vertices[mesh.rim_vertex_ids]
            p = rng.uniform(0.0, 5.0)
            _, g = model.energy_and_gradient(x, p)
            fd = _fd_gradient(lambda y: model.energy_and_gradient(y, p, with_grad=False)[0], x, model.free)
            f = model.free
            worst = max(worst, np.linalg.norm(g[f] - fd[f]) / np.linalg.norm(fd[f]))
            count += 1
    ok = worst < GRADIENT_TOL
    acceptance(2, ok, f"gradient vs central differences, worst rel. error {worst:.2e} (< {GRADIENT_TOL}) "
                      f"over {count} states at refinements 1 and 2")
    assert ok


# -- 3 -----------------------------------------------------------------------------


def test_criterion_3_unloading(acceptance):
    mesh = build_hemisphere_mesh(20.0, 2, 2.0)
    space = table1_space()
    draws = sobol_design(space, 3, seed=7)
    errors = []
    v_ed = enclosed_volume(mesh)
    for x in draws:
        mats, load = params_to_model_inputs(space.as_dict(x))
        res = unload(mesh, mats, load)
        # independent reinflation from the recovered reference
        model = MembraneModel(mesh, mats, load, reference=res.reference)
        xr = solve_equilibrium(model, load.EDP * MMHG_TO_KPA)
        errors.append(abs(enclosed_volume(mesh, xr - mesh.vertices) - v_ed) / v_ed)
    ok = max(errors) <= UNLOAD_TOL
    acceptance(3, ok, f"reinflated ED volume errors {', '.join(f'{e:.2e}' for e in errors)} "
                      f"(<= {UNLOAD_TOL}) on {len(errors)} draws at refinement 2")
    assert ok


# -- 4 -----------------------------------------------------------------------------


def test_criterion_4_emulator_quality(acceptance, tmp_path_factory):
    out = tmp_path_factory.mktemp("wave1")
    cfg = load_config(None, {"out_dir": str(out), "mesh.refinement": 2, "design.n_wave1": 200})
    t0 = time.perf_counter()
    Pipeline(cfg).run(["mesh", "design", "simulate", "train"])
    elapsed = time.perf_counter() - t0
    cols, rows = read_table(out / "train_metrics.csv")
    scores = {r[0]: (float(r[2]), float(r[3])) for r in rows}
    n_train = int(rows[0][1])
    worst_r2 = min(s[0] for s in scores.values())
    worst_ise = min(s[1] for s in scores.values())
    ok = worst_r2 > R2_MIN and worst_ise > ISE_MIN and elapsed < WAVE1_RUNTIME_S
    detail = ", ".join(f"{k} {a:.3f}/{b:.3f}" for k, (a, b) in scores.items())
    acceptance(4, ok, f"5-fold CV R2/ISE on {n_train} of 200 wave-1 runs over 14 inputs: {detail}; "
                      f"min R2 {worst_r2:.3f} (> {R2_MIN}), min ISE {worst_ise:.3f} (> {ISE_MIN}); "
                      f"simulate+train {elapsed / 60:.1f} min on one core (< 4 h)")
    assert ok


# -- 5 -----------------------------------------------------------------------------


def test_criterion_5_sobol_oracles(acceptance):
    S1, ST = ishigami_analytic()
    d = saltelli_design(np.array([[-np.pi] * 3, [np.pi] * 3]), 2**14, seed=0)
    res = sobol_indices(ishigami(d.stacked()), 3, n_bootstrap=10)
    err_ish = max(np.max(np.abs(res.S1[:, 0] - S1)), np.max(np.abs(res.ST[:, 0] - ST)))
    d2 = saltelli_design(np.array([[0.0, 0.0], [1.0, 1.0]]), 2**14, seed=0)
    res2 = sobol_indices(d2.stacked() @ np.array([1.0, 2.0]), 2, n_bootstrap=10)
    err_add = np.max(np.abs(res2.ST[:, 0] - [0.2, 0.8]))
    ok = err_ish < SOBOL_TOL and err_add < SOBOL_TOL
    acceptance(5, ok, f"Ishigami max index error {err_ish:.4f}, additive total-effect error {err_add:.4f} "
                      f"(< {SOBOL_TOL}) at N_base = 2^14")
    assert ok


# -- 6 and 8: synthetic verification at refinement 1 ------------------------------------


@pytest.fixture(scope="module")
def verification(tmp_path_factory):
    out = tmp_path_factory.mktemp("verify")
    cfg = load_config(None, {"out_dir": str(out), "mesh.refinement": 1})
    t0 = time.perf_counter()
    report = verify_synthetic(cfg)
    return cfg, out, report, time.perf_counter() - t0


def test_criterion_6_history_matching(acceptance, verification):
    cfg, out, report, _ = verification
    space = cfg.space9()
    pipe = Pipeline(cfg)
    _, ems, _, k = load_final_wave(pipe.ws, space, "verify/baseline/", "verify")
    level = report["levels"]["baseline"]
    truth_I = level["truth_implausibility"]
    reduction = level["reduction_vs_initial_box"]
    # nesting under the fixed final-wave emulators
    assert report["central_truth"]
    obs = _baseline_observation(cfg)
    wide, _ = hm_wave(space, ems, obs, 3.5, n_test=cfg.hm.n_test, seed=11)
    narrow, _ = hm_wave(space, ems, obs, 3.0, n_test=cfg.hm.n_test, seed=11)
    wide_rows = {tuple(r) for r in wide.points}
    nested = all(tuple(r) in wide_rows for r in narrow.points)
    ok = truth_I <= 3.0 and reduction >= REDUCTION_MIN and nested
    acceptance(6, ok, f"truth I = {truth_I:.2f} (<= 3) after {k} waves; initial-box reduction "
                      f"{100 * reduction:.1f}% (>= {100 * REDUCTION_MIN:.0f}%); retained sets nested: {nested}")
    assert ok


def _baseline_observation(cfg):
    # simulated truth with the baseline noise model, as in the verification run
    pipe = Pipeline(cfg)
    space = cfg.space9()
    truth = np.array([cfg.observation.truth[n] for n in space.names])
    y, status = pipe.runner().run([space.as_dict(truth)])
    assert status[0] == "ok"
    return Observation.from_features(y[0], cfg.observation.displacement_sd_mm, cfg.observation.esv_rel_sd)


def test_criterion_8_verification_study(acceptance, verification):
    cfg, out, report, elapsed = verification
    params = report["parameters"]
    inside_base = all(p["baseline"]["inside"] for p in params.values())
    inside_high = all(p["high"]["inside"] for p in params.values())
    widths = report["mean_ci_width_unit"]
    wider = widths["high"] > widths["baseline"]
    alpha_dist = {n: p["baseline"]["map_distance"] for n, p in params.items() if n.startswith("alpha_")}
    worst_alpha = max(alpha_dist.values())
    ok = inside_base and inside_high and wider and worst_alpha <= MAP_ALPHA_MAX and elapsed < VERIFY_RUNTIME_S
    missed = [n for n, p in params.items() if not (p["baseline"]["inside"] and p["high"]["inside"])]
    acceptance(8, ok, f"truth inside 95% CI: baseline {inside_base}, high {inside_high} (misses: {missed or 'none'}); "
                      f"mean normalised CI width {widths['baseline']:.3f} -> {widths['high']:.3f}; "
                      f"worst alpha MAP distance {worst_alpha:.2f} (<= {MAP_ALPHA_MAX}); "
                      f"run time {elapsed / 60:.1f} min at refinement 1 (< 12 h)")
    assert ok


# -- 7 -----------------------------------------------------------------------------


def test_criterion_7_mcmc_oracle(acceptance):
    def log_prob(X):
        return -0.5 * (np.atleast_2d(X) ** 2).sum(1)

    p0 = np.random.default_rng(1).normal(size=(20, 2))
    chain = stretch_sampler(log_prob, p0, steps=27500, burn_in=2500, thin=10, seed=4)
    S = chain.flat_samples
    mean_err = float(np.max(np.abs(S.mean(0))))
    cov_err = float(np.max(np.abs(np.cov(S.T) - np.eye(2))))
    formula = (stretch_acceptance(1.0, 9, -1.0, -1.0) == 1.0
               and stretch_acceptance(0.5, 3, 0.0, 0.0) == pytest.approx(0.25)
               and stretch_acceptance(2.0, 2, -3.0, -1.0) == pytest.approx(2.0 * np.exp(-2.0)))
    ok = mean_err < POSTERIOR_MEAN_TOL and cov_err < POSTERIOR_COV_TOL and formula
    acceptance(7, ok, f"standard normal from {len(S)} samples: mean error {mean_err:.3f} (< {POSTERIOR_MEAN_TOL}), "
                      f"covariance error {cov_err:.3f} (< {POSTERIOR_COV_TOL}); acceptance formula checked: {formula}")
    assert ok


# -- 9 -----------------------------------------------------------------------------


def test_criterion_9_cohort_statistics(acceptance):
    t = synthetic_table(0, sigma_u=0.0, demean_noise=True)
    fit = fit_lmm(t, "d_es_mm", "thickness_mm")
    X, _ = design_matrix(t, "thickness_mm")
    b_ols = np.linalg.lstsq(X, t.columns["d_es_mm"], rcond=None)[0][-1]
    ols_err = abs(fit.coef("thickness_mm") - b_ols) / abs(b_ols)
    hits = 0
    for seed in range(200):
        f = fit_lmm(synthetic_table(1000 + seed), "d_es_mm", "thickness_mm")
        i = f.names.index("thickness_mm")
        hits += abs(f.beta[i] - 2.0) <= 3 * f.se[i]
    d = np.array([1.2, 0.4, -0.3, 0.9, 0.6])
    b = np.array([3.0, 2.5, 4.1, 1.7, 2.2])
    (pt,) = paired_ttest_bonferroni(np.column_stack([b + d, b]), ["a", "b"])
    t_err = abs(pt.t - PAIRED_T)
    ok = ols_err < OLS_REL_TOL and hits / 200 >= COVERAGE_MIN and t_err < PAIRED_TOL
    acceptance(9, ok, f"LMM vs OLS slope rel. error {ols_err:.1e} (< {OLS_REL_TOL}); beta_2 coverage "
                      f"{hits}/200 (>= {COVERAGE_MIN:.0%}); paired t error {t_err:.1e} (< {PAIRED_TOL})")
    assert ok


# -- 10 ----------------------------------------------------------------------------


def test_criterion_10_determinism(acceptance, tiny_run, tiny_config, tmp_path):
    second = tmp_path / "second"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert main(["run", "--config", str(tiny_config), "--out", str(second)]) == 0
    names = ["map.csv", *sorted(p.relative_to(tiny_run).as_posix() for p in tiny_run.glob("hm/wave*_metrics.csv"))]
    same = {n: (tiny_run / n).read_bytes() == (second / n).read_bytes() for n in names}
    assert read_header(second / "map.csv")["config_hash"] == read_header(tiny_run / "map.csv")["config_hash"]
    ok = len(names) > 1 and all(same.values())
    acceptance(10, ok, f"two runs, identical bytes for {', '.join(n for n, s in same.items() if s)}"
                       + ("" if all(same.values()) else f"; differ: {[n for n, s in same.items() if not s]}"))
    assert ok
