import json
import shutil
import subprocess
import sys
import warnings

import numpy as np
import pytest
import tomli

from atriafit.cli import derive_seeds, main
from atriafit.errors import (
    ConfigError,
    DependencyError,
    NonConvergenceError,
    StageError,
    UnloadingError,
)
from atriafit.pipeline import STAGES, classify_failure, column_names, load_config, read_header
from atriafit.pipeline.artifacts import read_table
from atriafit.pipeline.stages import _centrality_warning


def args(cfg, out, *rest):
    return [*rest, "--config", str(cfg), "--out", str(out)]


def copy_run(src, tmp_path):
    dst = tmp_path / "run"
    shutil.copytree(src, dst)
    return dst


def test_full_run_writes_every_artifact(tiny_run):
    for name in ("mesh.txt", "design.csv", "simulations.csv", "emulators14.json", "train_metrics.csv", "gsa.csv",
                 "space9.csv", "observation.csv", "hm/summary.json", "hm/wave1_metrics.csv", "chain.csv",
                 "map.csv", "report.json"):
        assert (tiny_run / name).exists(), name
    report = json.loads((tiny_run / "report.json").read_text())
    assert set(report["posterior"]) == set(load_config().space9().names)
    assert "alternative" in report["prior"]


def test_artifacts_carry_config_hash_and_seed(tiny_run, tiny_config):
    h = load_config(tiny_config, {"out_dir": str(tiny_run)}).hash()
    files = [p for p in tiny_run.rglob("*") if p.is_file()]
    assert files
    for p in files:
        hdr = read_header(p)
        assert hdr.get("config_hash") == h, p
        assert "seed" in hdr, p


def test_simulate_twice_is_a_noop(tiny_run, tiny_config, tmp_path):
    run = copy_run(tiny_run, tmp_path)
    before = (run / "simulations.csv").read_bytes()
    mtime = (run / "simulations.csv").stat().st_mtime_ns
    assert main(args(tiny_config, run, "simulate")) == 0
    assert (run / "simulations.csv").read_bytes() == before
    assert (run / "simulations.csv").stat().st_mtime_ns == mtime


def test_resume_fills_only_missing_simulations(tiny_run, tiny_config, tmp_path):
    run = copy_run(tiny_run, tmp_path)
    path = run / "simulations.csv"
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:-3]))
    assert main(args(tiny_config, run, "simulate")) == 0
    assert path.read_text() == "".join(lines)


def test_report_without_mcmc_is_a_dependency_error(tiny_config, tmp_path, caplog):
    assert main(args(tiny_config, tmp_path, "report")) == 3
    assert "report" in caplog.text and "map.csv" in caplog.text


def test_dependency_error_names_stage(tiny_config, tmp_path):
    from atriafit.pipeline import Pipeline

    cfg = load_config(tiny_config, {"out_dir": str(tmp_path)})
    with pytest.raises(DependencyError) as info:
        Pipeline(cfg).run(["train"])
    assert info.value.stage == "train"


def test_changed_config_needs_force(tiny_run, tiny_config, tmp_path):
    run = copy_run(tiny_run, tmp_path)
    changed = args(tiny_config, run, "mesh", "--set", "mesh.radius_mm=21.0")
    assert main(changed) == 2
    assert main(changed + ["--force"]) == 0
    assert "radius 21.0" in (run / "mesh.txt").read_text()


def test_stage_commands_rerun_cleanly(tiny_run, tiny_config, tmp_path):
    run = copy_run(tiny_run, tmp_path)
    before = (run / "map.csv").read_bytes()
    for cmd in ("mesh", "design", "train", "gsa", "fix-C", "hm", "mcmc", "report"):
        assert main(args(tiny_config, run, cmd)) == 0, cmd
    assert (run / "map.csv").read_bytes() == before


def test_print_effective_config(capsys):
    assert main(["--print-effective-config", "--set", "mesh.refinement=1", "--set", "hm.n_test=500"]) == 0
    cfg = tomli.loads(capsys.readouterr().out)
    assert cfg["mesh"]["refinement"] == 1
    assert cfg["hm"]["n_test"] == 500
    assert cfg["mcmc"]["walkers"] == 18


def test_paper_scale(capsys):
    assert main(["--print-effective-config", "--paper-scale"]) == 0
    cfg = tomli.loads(capsys.readouterr().out)
    assert (cfg["hm"]["n_test"], cfg["mcmc"]["steps"], cfg["mcmc"]["burn_in"]) == (100000, 100000, 10000)


def test_seed_derivation(capsys):
    assert derive_seeds(7) == derive_seeds(7)
    assert derive_seeds(7) != derive_seeds(8)
    s = derive_seeds(7)
    assert len({s.design, s.train, s.gsa, s.hm, s.mcmc}) == 5
    assert main(["--print-effective-config", "--seed", "7"]) == 0
    assert tomli.loads(capsys.readouterr().out)["seeds"]["hm"] == s.hm


@pytest.mark.parametrize("extra", [
    ["--set", "ranges.EDP=[0.5, 12.0]"],
    ["--set", "nonsense.key=1"],
    ["--set", "mesh.refinement=-1"],
    ["--set", "mcmc.burn_in=99999"],
    ["--set", "observation.truth.EDP=50.0"],
    ["--set", "mesh.refinement=one"],
    ["--seed", "-1"],
])
def test_config_errors_exit_2(extra, tmp_path):
    assert main(["--print-effective-config", "--out", str(tmp_path), *extra]) == 2


def test_allow_out_of_range(capsys):
    assert main(["--print-effective-config", "--allow-out-of-range", "--set", "ranges.EDP=[0.5, 12.0]"]) == 0
    assert tomli.loads(capsys.readouterr().out)["ranges"]["EDP"] == [0.5, 12.0]


def test_missing_config_file(tmp_path):
    assert main(["mesh", "--config", str(tmp_path / "absent.toml"), "--out", str(tmp_path)]) == 2


def test_unknown_stage(tmp_path, tiny_config):
    assert main(args(tiny_config, tmp_path, "run", "--stages", "mesh,bogus")) == 2


def test_run_subset_in_pipeline_order(tmp_path, tiny_config):
    assert main(args(tiny_config, tmp_path, "run", "--stages", "design,mesh")) == 0
    assert (tmp_path / "design.csv").exists()
    cols, rows = read_table(tmp_path / "design.csv")
    assert cols[0] == "sim_id" and len(cols) == 15 and len(rows) == 24


def test_stats_command(tmp_path):
    from atriafit.cohortstats import CohortTable, write_cohort_csv
    from atriafit.geometry import FEATURE_REGIONS

    rng = np.random.default_rng(0)
    cases = np.repeat([f"c{i}" for i in range(6)], 5)
    regions = np.tile(FEATURE_REGIONS, 6)
    cols = {k: rng.normal(size=30) + 3 for k in ("d_es_mm", "thickness_mm", "eat_ml", "alpha")}
    write_cohort_csv(CohortTable(cases, regions, cols), tmp_path / "cohort.csv")
    assert main(["stats", "--cohort", str(tmp_path / "cohort.csv"), "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "stats_report.json").read_text())
    assert set(report["models"]) == {"thickness_mm", "eat_ml", "alpha"}


def test_exit_codes():
    assert classify_failure(ConfigError("x")) == 2
    assert classify_failure(DependencyError("x")) == 3
    assert classify_failure(NonConvergenceError("x")) == 4
    assert classify_failure(UnloadingError("x")) == 4
    err = StageError("wave 2")
    err.__cause__ = NonConvergenceError("inner")
    assert classify_failure(err) == 4
    assert classify_failure(StageError("other")) == 3


def test_corner_truth_warns():
    space = load_config().space9()
    with pytest.warns(UserWarning, match="corner"):
        assert _centrality_warning(space, space.upper) is False
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert _centrality_warning(space, 0.5 * (space.lower + space.upper)) is True


def test_column_names_carry_units():
    cols = column_names(load_config().space14())
    assert "EDP_mmHg" in cols and "C_roof_kPa" in cols and "k_peri_kPa_per_um" in cols and "PTH" in cols


def test_stage_order():
    assert STAGES == ("mesh", "design", "simulate", "train", "gsa", "fix-C", "hm", "mcmc", "report")


def test_console_script(tmp_path):
    exe = shutil.which("atriafit")
    cmd = [exe] if exe else [sys.executable, "-m", "atriafit.cli"]
    out = subprocess.run([*cmd, "--print-effective-config"], capture_output=True, text=True, check=False)
    assert out.returncode == 0
    assert "[mesh]" in out.stdout
    bad = subprocess.run([*cmd, "--print-effective-config", "--set", "mesh.n_steps=1"], capture_output=True,
                         text=True, check=False)
    assert bad.returncode == 2


def test_partial_truth_override_keeps_other_entries(capsys):
    assert main(["--print-effective-config", "--set", "observation.truth.EDP=5.0"]) == 0
    truth = tomli.loads(capsys.readouterr().out)["observation"]["truth"]
    assert truth["EDP"] == 5.0 and truth["alpha_roof"] == 2.1
