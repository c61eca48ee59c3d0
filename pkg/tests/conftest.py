import numpy as np
import pytest

from atriafit.geometry import build_hemisphere_mesh


@pytest.fixture(scope="session")
def mesh_r1():
    return build_hemisphere_mesh(radius=20.0, refinement=1, thickness_profile=2.0)


@pytest.fixture(scope="session")
def mesh_r2():
    return build_hemisphere_mesh(radius=20.0, refinement=2, thickness_profile=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# small enough for an end-to-end run at refinement 1 in about a minute
TINY_CONFIG = """\
[mesh]
refinement = 1
n_steps = 4

[design]
n_wave1 = 24

[emulator]
n_restarts = 1
cv_folds = 3

[gsa]
n_base = 64
n_bootstrap = 10

[hm]
n_first = 20
n_later = 10
n_test = 1000
max_waves = 2

[mcmc]
walkers = 20
steps = 300
burn_in = 100
"""


@pytest.fixture(scope="session")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.toml"
    path.write_text(TINY_CONFIG)
    return path


@pytest.fixture(scope="session")
def tiny_run(tiny_config, tmp_path_factory):
    """Output directory of one full pipeline run under the tiny config."""
    from atriafit.cli import main

    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--config", str(tiny_config), "--out", str(out)]) == 0
    return out


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line for a criterion; the lines are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
