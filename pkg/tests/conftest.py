import json
from pathlib import Path

import numpy as np
import pytest

from transim.phantom import rasterize, standard_shepp_logan
from transim.projector import FanGeometry, fan_project

GOLDEN = Path(__file__).parent / "golden"

# acceptance verdict lines, echoed in the terminal summary
VERDICTS: list[str] = []


def golden(name: str) -> dict:
    return json.loads((GOLDEN / f"{name}.json").read_text())


@pytest.fixture(scope="session")
def thresholds():
    return golden("thresholds")


@pytest.fixture(scope="session")
def shepp_256():
    return rasterize(standard_shepp_logan(), 256, 256)


@pytest.fixture(scope="session")
def small_fan_benchmark():
    """Reduced fan-beam benchmark: 128^2 phantom, 180 views x 255 detectors."""
    img = rasterize(standard_shepp_logan(), 128, 128)
    return img, fan_project(img, FanGeometry.standard(180, 255))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
