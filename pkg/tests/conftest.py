import numpy as np
import pytest

from crossdiff.coefficients import preset_ion_transport, preset_maxwell_stefan, preset_skt
from crossdiff.fields import Grid1D, SpeciesState

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20181)


PRESETS = {
    "maxwell_stefan": lambda: preset_maxwell_stefan(2.0, 1.0, 2),
    "skt": lambda: preset_skt(1.0, [1.0, 1.0], L=3.0),
    "ion_transport": lambda: preset_ion_transport(1.0, 1.0, 2),
}


def smooth_state(model, grid: Grid1D, scale=1.0):
    """Two-species smooth positive state with aggregate well inside [0, L]."""
    x = grid.centers / grid.length
    u = np.array([0.3 + 0.1 * np.cos(np.pi * x), 0.25 - 0.08 * np.cos(2 * np.pi * x)]) * scale
    return SpeciesState(u[: model.n], model.a)
