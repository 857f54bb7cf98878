import numpy as np
import pytest

from penaltyflow.continuity import PenaltyParams
from penaltyflow.fields import StaggeredGrid
from penaltyflow.geometry import DomainSpec


@pytest.fixture
def grid24():
    return StaggeredGrid(24, 24, 1 / 24, 1 / 24)


@pytest.fixture
def grid64():
    return StaggeredGrid(64, 64, 1 / 64, 1 / 64)


@pytest.fixture
def domain():
    return DomainSpec(1.0, 1.0, 0.1)


@pytest.fixture
def params():
    return PenaltyParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
