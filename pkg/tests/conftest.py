"""Shared fixtures; modules under app/ import each other by bare name."""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "app"))

from models import NonlinearitySpec, Sign, TorusSpec  # noqa: E402
from spectral import random_field  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line():
    return TorusSpec(1, 8)


@pytest.fixture
def plane():
    return TorusSpec(2, 4, (1.0, 2.0))


@pytest.fixture
def cubic():
    return NonlinearitySpec(1, Sign.DEFOCUSING)


@pytest.fixture
def random_line_field(line, rng):
    return random_field(line, rng, gamma=1.0)
