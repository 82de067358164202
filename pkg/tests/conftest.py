import numpy as np
import pytest

from emproc import ModelSpec, PathSample, TimeGrid


@pytest.fixture
def uniform_model():
    return ModelSpec("ComonotoneDriver", marginal="uniform")


@pytest.fixture
def ou_model():
    return ModelSpec("StationaryOUGaussian", rho=1.0)


@pytest.fixture
def grid2():
    return TimeGrid((0.2, 0.8), 1.0)


def column_sample(values, model=None, times=(0.5, 1.0)):
    """A PathSample whose every time column equals ``values``."""
    model = model or ModelSpec("ComonotoneDriver", marginal="uniform")
    v = np.asarray(values, dtype=float)
    grid = TimeGrid(tuple(times), max(times))
    return PathSample(np.repeat(v[:, None], grid.m, axis=1), grid, model)


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
