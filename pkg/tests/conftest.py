import numpy as np
import pytest

from isacsweep.harness.config import ScenarioConfig
from isacsweep.harness.experiments import build_scenario
from isacsweep.harness.oracles import random_scene


@pytest.fixture(scope="session")
def baseline():
    """Baseline scenario (12x12 panels, three illuminators, three voxels)."""
    return build_scenario(ScenarioConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_scenes():
    gen = np.random.default_rng(99)
    return [random_scene(gen, side, j) for side, j in ((2, 2), (3, 2), (4, 3), (3, 3))]


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
