import sys

import numpy as np
import pytest

from dispcancel.spectral_core import gaussian_spectrum, grid_from_wavelength_range

NM = 1e-9
UM = 1e-6


@pytest.fixture(scope="session")
def ref_grid():
    return grid_from_wavelength_range(607 * NM, 1012 * NM, 4096)


@pytest.fixture(scope="session")
def ref_source(ref_grid):
    return gaussian_spectrum(ref_grid, 792 * NM, 154 * NM, 1.0).snapped()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
