"""Pipeline stages and the synthetic-truth verification study."""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from ..calibration.history import HMSchedule, NroyCloud, implausibility, run_history_matching, train_emulators
from ..calibration.mcmc import ensemble_mcmc, log_likelihood, map_estimate, nearest_plausible
from ..calibration.space import Observation, ParameterSpace, sobol_design
from ..cohortstats import read_cohort_csv, stats_report, write_stats_report
from ..emulator import EmulatorConfig, cross_validate, emulator_from_dict, emulator_to_dict, predict_many
from ..errors import (
    AtriaFitError,
    ConfigError,
    DependencyError,
    DivergenceError,
    NonConvergenceError,
    StageError,
    UnloadingError,
)
from ..geometry import FEATURE_REGIONS, build_hemisphere_mesh, load_mesh, save_mesh
from ..mechanics import FEATURE_NAMES, simulate
from ..sensitivity import saltelli_design, sobol_indices, write_gsa_csv
from .artifacts import Workspace, header_lines, read_numeric, read_table, write_json, write_table
from .config import PipelineConfig

log = logging.getLogger(__name__)

STAGES = ("mesh", "design", "simulate", "train", "gsa", "fix-C", "hm", "mcmc", "report")

UNIT_SUFFIX = {"kPa": "_kPa", "mmHg": "_mmHg", "kPa/um": "_kPa_per_um", "-": ""}
SOLVER_FAILURES = (NonConvergenceError, UnloadingError, DivergenceError)


def column_names(space: ParameterSpace) -> list[str]:
    return [p.name + UNIT_SUFFIX.get(p.unit, "_" + p.unit) for p in space.parameters]


# ----------------------------------------------------------------------------
# simulation


def _simulate_one(args):
    params, mesh, n_steps = args
    try:
        return simulate(params, mesh, n_steps=n_steps).as_array(), "ok"
    except (AtriaFitError, ValueError, FloatingPointError) as exc:
        return np.full(len(FEATURE_NAMES), np.nan), f"failed: {type(exc).__name__}"


class SimulationRunner:
    """Runs the forward model on named points, with an in-memory cache."""

    def __init__(self, mesh, n_steps: int = 10, workers: int = 1):
        self.mesh = mesh
        self.n_steps = n_steps
        self.workers = workers
        self.cache: dict = {}

    @staticmethod
    def key(params: dict) -> tuple:
        return tuple(sorted((k, repr(float(v))) for k, v in params.items()))

    def seed_cache(self, params_list, outputs):
        for p, y in zip(params_list, outputs):
            self.cache[self.key(p)] = (np.asarray(y, dtype=float), "ok" if np.all(np.isfinite(y)) else "failed")

    def run(self, params_list: list[dict]) -> tuple[np.ndarray, list[str]]:
        todo = [p for p in params_list if self.key(p) not in self.cache]
        jobs = [(p, self.mesh, self.n_steps) for p in todo]
        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(self.workers) as ex:
                results = list(ex.map(_simulate_one, jobs))
        else:
            results = [_simulate_one(j) for j in jobs]
        for p, r in zip(todo, results):
            self.cache[self.key(p)] = r
        out = [self.cache[self.key(p)] for p in params_list]
        return np.array([o[0] for o in out]).reshape(len(out), len(FEATURE_NAMES)), [o[1] for o in out]

    def for_space(self, space: ParameterSpace):
        def f(X):
            return self.run([space.as_dict(x) for x in np.atleast_2d(X)])[0]
        return f


# ----------------------------------------------------------------------------
# pipeline


class Pipeline:
    def __init__(self, cfg: PipelineConfig, force: bool = False):
        self.cfg = cfg
        self.ws = Workspace(cfg.out_dir, cfg.hash(), force)
        self._mesh = None
        self._runner = None

    def header(self, seed, stage):
        return header_lines(self.ws.hash, seed, stage)

    # -- helpers ---------------------------------------------------------------

    def mesh(self):
        if self._mesh is None:
            self._mesh = load_mesh(self.ws.require("mesh.txt", "mesh"))
        return self._mesh

    def runner(self) -> SimulationRunner:
        if self._runner is None:
            self._runner = SimulationRunner(self.mesh(), self.cfg.mesh.n_steps, self.cfg.simulate.workers)
        return self._runner

    def emulator_config(self, seed: int) -> EmulatorConfig:
        return EmulatorConfig(n_restarts=self.cfg.emulator.n_restarts, seed=seed,
                              learn_nugget=self.cfg.emulator.learn_nugget)

    def run(self, stages) -> None:
        for s in stages:
            if s not in STAGES:
                raise ConfigError(f"unknown stage {s!r}; choose from {', '.join(STAGES)}")
        for s in STAGES:  # fixed order
            if s in stages:
                log.info("stage %s", s)
                getattr(self, "stage_" + s.replace("-", "_"))()

    # -- stages ----------------------------------------------------------------

    def stage_mesh(self):
        name = "mesh.txt"
        if self.ws.current(name):
            return
        m = self.cfg.mesh
        mesh = build_hemisphere_mesh(radius=m.radius_mm, refinement=m.refinement, thickness_profile=m.thickness_mm)
        save_mesh(mesh, self.ws.guard(name), self.header(0, "mesh"))
        self._mesh = None

    def stage_design(self):
        name = "design.csv"
        if self.ws.current(name):
            return
        self.ws.require("mesh.txt", "design")
        space = self.cfg.space14()
        X = sobol_design(space, self.cfg.design.n_wave1, seed=self.cfg.seeds.design)
        write_table(self.ws.guard(name), ["sim_id", *column_names(space)],
                    [[i, *x] for i, x in enumerate(X)], self.header(self.cfg.seeds.design, "design"))

    def _design14(self, stage="simulate"):
        space = self.cfg.space14()
        p = self.ws.require("design.csv", stage)
        return space, read_numeric(p, column_names(space)), read_numeric(p, ["sim_id"])[:, 0].astype(int)

    def stage_simulate(self):
        name = "simulations.csv"
        space, X, ids = self._design14()
        cols = ["sim_id", "status", *FEATURE_NAMES]
        done = {}
        if self.ws.current(name):
            c, rows = read_table(self.ws.root / name)
            done = {int(r[0]): r for r in rows}
        todo = [i for i in range(len(ids)) if int(ids[i]) not in done]
        if not todo:
            return
        Y, status = self.runner().run([space.as_dict(X[i]) for i in todo])
        for i, y, s in zip(todo, Y, status):
            done[int(ids[i])] = [int(ids[i]), s, *y]
        write_table(self.ws.guard(name), cols, [done[k] for k in sorted(done)], self.header(0, "simulate"))

    def _simulations14(self, stage):
        space, X, ids = self._design14(stage)
        p = self.ws.require("simulations.csv", stage)
        cols, rows = read_table(p)
        by_id = {int(r[0]): np.array([float(v) for v in r[2:]]) for r in rows}
        missing = [int(i) for i in ids if int(i) not in by_id]
        if missing:
            raise DependencyError(f"{len(missing)} design points lack simulations", stage=stage)
        Y = np.array([by_id[int(i)] for i in ids])
        return space, X, Y

    def stage_train(self):
        if self.ws.current("emulators14.json") and self.ws.current("train_metrics.csv"):
            return
        space, X, Y = self._simulations14("train")
        seed = self.cfg.seeds.train
        ems = train_emulators(space, X, Y, self.emulator_config(seed), seed=seed)
        write_json(self.ws.guard("emulators14.json"),
                   {"feature_names": list(FEATURE_NAMES), "emulators": [emulator_to_dict(e) for e in ems]},
                   self.header(seed, "train"))
        ok = np.all(np.isfinite(Y), axis=1)
        rows = []
        for j, f in enumerate(FEATURE_NAMES):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cfg = replace(self.emulator_config(seed + j), log_inputs=space.log_mask)
                cv = cross_validate(X[ok], Y[ok, j], self.cfg.emulator.cv_folds, cfg, bounds=space.bounds, seed=seed)
            rows.append([f, int(ok.sum()), cv.mean_r2, cv.mean_ise, *cv.r2, *cv.ise])
        k = self.cfg.emulator.cv_folds
        write_table(self.ws.guard("train_metrics.csv"),
                    ["feature", "n_train", "r2_mean", "ise_mean", *(f"r2_fold{i}" for i in range(k)),
                     *(f"ise_fold{i}" for i in range(k))], rows, self.header(seed, "train"))

    def _emulators(self, name, stage):
        data = json.loads(self.ws.require(name, stage).read_text())
        return [emulator_from_dict(d) for d in data["emulators"]]

    def stage_gsa(self):
        if self.ws.current("gsa.csv"):
            return
        space = self.cfg.space14()
        ems = self._emulators("emulators14.json", "gsa")
        seed = self.cfg.seeds.gsa
        design = saltelli_design(space, self.cfg.gsa.n_base, seed=seed)
        means, _ = predict_many(ems, design.stacked())
        res = sobol_indices(means, space.dim, space.names, FEATURE_NAMES, self.cfg.gsa.n_bootstrap, seed)
        write_gsa_csv(res, self.ws.guard("gsa.csv"), self.header(seed, "gsa"))

    def stage_fix_C(self):
        name = "space9.csv"
        if self.ws.current(name):
            return
        self.ws.require("gsa.csv", "fix-C")
        space = self.cfg.space9()
        rows = [[p.name, p.unit, p.lower, p.upper, ""] for p in space.parameters]
        rows += [[n, "kPa", v, v, "fixed"] for n, v in space.fixed]
        write_table(self.ws.guard(name), ["name", "unit", "lower", "upper", "status"], rows,
                    self.header(0, "fix-C"))

    def observation(self, stage="hm") -> Observation:
        name = "observation.csv"
        oc = self.cfg.observation
        if not self.ws.current(name):
            if oc.source == "file":
                vals = read_numeric(oc.features_file, ["mean", "sd"])
                obs = Observation(vals[:, 0], vals[:, 1], provenance="external file")
            else:
                space = self.cfg.space9()
                params = space.as_dict([oc.truth[n] for n in space.names])
                y, status = self.runner().run([params])
                if status[0] != "ok":
                    raise NonConvergenceError(f"simulation of the synthetic truth failed ({status[0]})")
                obs = Observation.from_features(y[0], oc.displacement_sd_mm, oc.esv_rel_sd)
            write_table(self.ws.guard(name), ["feature", "mean", "sd", "provenance"],
                        [[f, m, s, obs.provenance] for f, m, s in zip(FEATURE_NAMES, obs.mean, obs.sd)],
                        self.header(0, stage))
        cols, rows = read_table(self.ws.root / name)
        return Observation(np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows]), rows[0][3])

    def stage_hm(self):
        self.ws.require("space9.csv", "hm")
        space = self.cfg.space9()
        obs = self.observation()
        run_hm_stage(self, space, obs, "hm/", self.cfg.seeds.hm)

    def stage_mcmc(self):
        run_mcmc_stage(self, self.cfg.space9(), "hm/", "", self.cfg.seeds.mcmc)

    def stage_report(self):
        self.ws.require("map.csv", "report")
        report = build_report(self)
        write_json(self.ws.guard("report.json"), report, self.header(0, "report"))

    # -- extra commands ------------------------------------------------------

    def stats(self, cohort_path) -> dict:
        if cohort_path is None:
            raise ConfigError("the stats command needs --cohort <cohort.csv>")
        table = read_cohort_csv(cohort_path)
        report = stats_report(table)
        write_stats_report(report, self.ws.guard("stats_report.json"),
                           {"header": dict(h.split(": ", 1) for h in self.header(0, "stats")[1:])})
        return report


# ----------------------------------------------------------------------------
# history matching and MCMC artifacts (shared with the verification study)


def _schedule(cfg: PipelineConfig, seed: int) -> HMSchedule:
    h = cfg.hm
    return HMSchedule(h.first_threshold, h.threshold_step, h.final_threshold, h.n_first, h.n_later, h.n_test,
                      h.max_waves, h.stop_reduction, cfg.emulator.cv_folds, seed)


def run_hm_stage(pipe: Pipeline, space: ParameterSpace, obs: Observation, prefix: str, seed: int):
    ws = pipe.ws
    if ws.current(prefix + "summary.json"):
        return
    runner = pipe.runner()
    sims = prefix + "simulations.csv"
    pcols = column_names(space)
    if ws.current(sims):
        X = read_numeric(ws.root / sims, pcols)
        Y = read_numeric(ws.root / sims, list(FEATURE_NAMES))
        runner.seed_cache([space.as_dict(x) for x in X], Y)
    hdr = pipe.header(seed, "hm")
    sim_rows = []

    def on_wave(rec):
        k = rec.wave
        base = len(sim_rows)
        for i, (x, y) in enumerate(zip(rec.design, rec.outputs)):
            sim_rows.append([base + i, k, *x, *y])
        write_table(ws.guard(sims), ["sim_id", "wave", *pcols, *FEATURE_NAMES], sim_rows, hdr)
        write_table(ws.guard(f"{prefix}wave{k}_design.csv"), ["sim_id", *pcols],
                    [[base + i, *x] for i, x in enumerate(rec.design)], hdr)
        write_table(ws.guard(f"{prefix}wave{k}_nroy.csv"), [f"u_{n}" for n in space.names],
                    rec.cloud.points, hdr)
        write_table(ws.guard(f"{prefix}wave{k}_metrics.csv"), ["metric", "value"],
                    [[m, v] for m, v in rec.metrics.items()], hdr)
        write_json(ws.guard(f"{prefix}wave{k}_emulators.json"),
                   {"feature_names": list(FEATURE_NAMES), "emulators": [emulator_to_dict(e) for e in rec.emulators]},
                   hdr)

    res = run_history_matching(space, runner.for_space(space), obs, _schedule(pipe.cfg, seed),
                               pipe.emulator_config(seed), on_wave)
    cloud = res.cloud
    write_json(ws.guard(prefix + "summary.json"), {
        "waves": len(res.waves),
        "thresholds": [w.metrics["threshold"] for w in res.waves],
        "nroy_volume_fraction": list(cloud.fraction_history),
        "reduction_vs_initial_box": 1.0 - cloud.volume_fraction,
        "final_box": {n: [float(a), float(b)] for n, a, b in zip(space.names, *cloud.box_physical())},
    }, hdr)


def load_final_wave(ws: Workspace, space: ParameterSpace, prefix: str, stage: str):
    summary = json.loads(ws.require(prefix + "summary.json", stage).read_text())
    k = summary["waves"]
    U = read_numeric(ws.require(f"{prefix}wave{k}_nroy.csv", stage), [f"u_{n}" for n in space.names])
    data = json.loads(ws.require(f"{prefix}wave{k}_emulators.json", stage).read_text())
    ems = [emulator_from_dict(d) for d in data["emulators"]]
    fr = tuple(summary["nroy_volume_fraction"])
    thr = summary["thresholds"][-1]
    cloud = NroyCloud(space, k, U, thr, U.min(0), U.max(0), fr, float("nan"))
    cols = column_names(space)
    X = read_numeric(ws.require(prefix + "simulations.csv", stage), ["sim_id", "wave", *cols, *FEATURE_NAMES])
    return cloud, ems, X, k


def run_mcmc_stage(pipe: Pipeline, space: ParameterSpace, hm_prefix: str, out_prefix: str, seed: int,
                   obs: Observation | None = None):
    ws = pipe.ws
    if ws.current(out_prefix + "map.csv") and ws.current(out_prefix + "chain.csv"):
        return
    cloud, ems, sims, k = load_final_wave(ws, space, hm_prefix, "mcmc")
    obs = obs or pipe.observation("mcmc")
    m = pipe.cfg.mcmc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        chain = ensemble_mcmc(cloud, ems, obs, m.walkers, m.steps, m.burn_in, m.thin, seed)
    hdr = pipe.header(seed, "mcmc")
    cols = column_names(space)
    rows = []
    for r, step in enumerate(chain.kept_steps):
        for w in range(chain.walkers):
            rows.append([w, int(step), *chain.samples[r, w], chain.log_posterior[r, w]])
    write_table(ws.guard(out_prefix + "chain.csv"), ["walker", "step", *cols, "log_posterior"], rows, hdr)
    mp = map_estimate(chain)
    last = sims[(sims[:, 1] == k) & np.all(np.isfinite(sims[:, 2 + space.dim:]), axis=1)]
    sim_id, dist = nearest_plausible(mp, last[:, 2:2 + space.dim], last[:, 0].astype(int))
    ci = chain.credible_intervals(0.95)
    write_table(ws.guard(out_prefix + "map.csv"),
                ["parameter", "map", "ci95_lower", "ci95_upper", "posterior_mean"],
                [[c, v, lo, hi, mu] for c, v, lo, hi, mu in
                 zip(cols, mp.values, ci[0], ci[1], chain.flat_samples.mean(0))]
                + [["log_posterior", float(chain.flat_log_posterior.max()), "", "", ""],
                   ["acceptance_fraction", chain.acceptance_fraction, "", "", ""],
                   ["nearest_sim_id", sim_id, "", "", ""],
                   ["nearest_sim_distance_unit", dist, "", "", ""]], hdr)


def read_map(ws: Workspace, space: ParameterSpace, prefix: str = "") -> dict:
    cols, rows = read_table(ws.require(prefix + "map.csv", "report"))
    out = {r[0]: r[1:] for r in rows}
    pc = column_names(space)
    return {
        "map": np.array([float(out[c][0]) for c in pc]),
        "ci": np.array([[float(out[c][1]), float(out[c][2])] for c in pc]).T,
        "mean": np.array([float(out[c][3]) for c in pc]),
        "nearest_sim_id": int(float(out["nearest_sim_id"][0])),
        "nearest_sim_distance_unit": float(out["nearest_sim_distance_unit"][0]),
        "acceptance_fraction": float(out["acceptance_fraction"][0]),
    }


def build_report(pipe: Pipeline) -> dict:
    ws, cfg = pipe.ws, pipe.cfg
    space = cfg.space9()
    report = {"config_hash": ws.hash}
    if ws.current("gsa.csv"):
        cols, rows = read_table(ws.root / "gsa.csv")
        ranking = sorted(((r[0], float(r[-1])) for r in rows), key=lambda t: -t[1])
        scores = dict(ranking)
        report["gsa_ranking"] = ranking
        report["alpha_outranks_C"] = {r: scores[f"alpha_{r}"] > scores[f"C_{r}"] for r in FEATURE_REGIONS}
        report["gsa_note"] = "indices computed on emulator means; emulator uncertainty is not propagated"
    if ws.current("train_metrics.csv"):
        cols, rows = read_table(ws.root / "train_metrics.csv")
        report["emulator_cv"] = {r[0]: {"r2": float(r[2]), "ise": float(r[3])} for r in rows}
    summary = json.loads((ws.root / "hm/summary.json").read_text())
    report["history_matching"] = {k: v for k, v in summary.items() if k != "header"}
    res = read_map(ws, space)
    report["posterior"] = {
        n: {"map": float(m), "ci95": [float(a), float(b)], "mean": float(mu)}
        for n, m, a, b, mu in zip(space.names, res["map"], res["ci"][0], res["ci"][1], res["mean"])
    }
    report["nearest_plausible_sim_id"] = res["nearest_sim_id"]
    report["prior"] = {
        "adopted": "uniform on the final NROY bounding box, support restricted to I <= 3 under final-wave emulators",
        "alternative": "uniform on the final NROY bounding box without the implausibility restriction",
    }
    if cfg.observation.source == "synthetic":
        truth = np.array([cfg.observation.truth[n] for n in space.names])
        report["truth_inside_ci95"] = {n: bool(a <= t <= b) for n, t, a, b in zip(space.names, truth, *res["ci"])}
        report["map_abs_error"] = {n: float(abs(m - t)) for n, m, t in zip(space.names, res["map"], truth)}
    return report


# ----------------------------------------------------------------------------
# verification study


def _centrality_warning(space: ParameterSpace, truth: np.ndarray) -> bool:
    u = space.to_unit(truth)
    corner = bool(np.all(np.isclose(u, 0.0) | np.isclose(u, 1.0)))
    if corner:
        warnings.warn("the verification truth sits at a corner of the parameter space; it is not central",
                      stacklevel=3)
    return not corner


def verify_synthetic(cfg: PipelineConfig, force: bool = False) -> dict:
    """Recover a known parameter point at baseline and high observation noise.

    Writes ``verify/<level>/`` history-matching and MCMC artifacts plus
    ``verification.csv`` and ``verification.json`` in the output directory.
    """
    pipe = Pipeline(cfg, force)
    pipe.stage_mesh()
    space = cfg.space9()
    oc = cfg.observation
    truth = np.array([oc.truth[n] for n in space.names])
    central = _centrality_warning(space, truth)
    y, status = pipe.runner().run([space.as_dict(truth)])
    if status[0] != "ok":
        raise NonConvergenceError(f"simulation of the synthetic truth failed ({status[0]})")
    levels = {
        "baseline": Observation.from_features(y[0], oc.displacement_sd_mm, oc.esv_rel_sd),
        "high": Observation.from_features(y[0], oc.high_displacement_sd_mm, oc.high_esv_rel_sd),
    }
    results = {}
    for name, obs in levels.items():
        prefix = f"verify/{name}/"
        run_hm_stage(pipe, space, obs, prefix, cfg.seeds.hm)
        run_mcmc_stage(pipe, space, prefix, prefix, cfg.seeds.mcmc, obs=obs)
        r = read_map(pipe.ws, space, prefix)
        summary = json.loads((pipe.ws.root / prefix / "summary.json").read_text())
        cloud, ems, _, _ = load_final_wave(pipe.ws, space, prefix, "verify")
        r["truth_implausibility"] = float(implausibility(truth, ems, obs))
        r["reduction_vs_initial_box"] = summary["reduction_vs_initial_box"]
        r["log_likelihood_at_truth"] = float(log_likelihood(truth, ems, obs))
        results[name] = r
    base, high = results["baseline"], results["high"]
    width_b = base["ci"][1] - base["ci"][0]
    width_h = high["ci"][1] - high["ci"][0]
    rows, table = [], {}
    cols = column_names(space)
    for i, n in enumerate(space.names):
        entry = {"truth": float(truth[i])}
        for lvl, r in results.items():
            entry[lvl] = {
                "ci95": [float(r["ci"][0, i]), float(r["ci"][1, i])],
                "inside": bool(r["ci"][0, i] <= truth[i] <= r["ci"][1, i]),
                "map": float(r["map"][i]),
                "map_distance": float(abs(r["map"][i] - truth[i])),
            }
        entry["ci_width_ratio_high_over_baseline"] = float(width_h[i] / width_b[i]) if width_b[i] > 0 else float("inf")
        table[n] = entry
        rows.append([cols[i], truth[i],
                     base["ci"][0, i], base["ci"][1, i], entry["baseline"]["inside"], entry["baseline"]["map_distance"],
                     high["ci"][0, i], high["ci"][1, i], entry["high"]["inside"], entry["high"]["map_distance"],
                     entry["ci_width_ratio_high_over_baseline"]])
    hdr = pipe.header(cfg.seeds.hm, "verify")
    write_table(pipe.ws.guard("verification.csv"),
                ["parameter", "truth", "baseline_ci95_lower", "baseline_ci95_upper", "baseline_truth_inside",
                 "baseline_map_distance", "high_ci95_lower", "high_ci95_upper", "high_truth_inside",
                 "high_map_distance", "ci_width_ratio"], rows, hdr)
    report = {
        "central_truth": central,
        "parameters": table,
        "mean_ci_width": {"baseline": float(width_b.mean()), "high": float(width_h.mean())},
        "mean_ci_width_unit": {"baseline": float((width_b / (space.upper - space.lower)).mean()),
                               "high": float((width_h / (space.upper - space.lower)).mean())},
        "levels": {lvl: {"truth_implausibility": r["truth_implausibility"],
                         "reduction_vs_initial_box": r["reduction_vs_initial_box"],
                         "acceptance_fraction": r["acceptance_fraction"]} for lvl, r in results.items()},
    }
    write_json(pipe.ws.guard("verification.json"), report, hdr)
    return report


def classify_failure(exc: BaseException) -> int:
    """Exit status for an exception escaping a stage."""
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, SOLVER_FAILURES):
        return 4
    if isinstance(exc, StageError) and isinstance(exc.__cause__, SOLVER_FAILURES):
        return 4
    return 3


__all__ = ["STAGES", "Pipeline", "SimulationRunner", "verify_synthetic", "classify_failure", "column_names"]
