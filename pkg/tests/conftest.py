import numpy as np
import pytest

from sampler import TruncatedSample
from truncation_model import TruncationModel, point_mass, uniform, weibull

HAND_PAIRS = [(0.1, 0.5), (0.2, 0.3), (0.4, 0.9)]


@pytest.fixture
def uniform_uniform():
    """Y ~ U(0,1), T ~ U(0,1): Assumption A only, alpha = 0.5."""
    return TruncationModel(uniform(0.0, 1.0), uniform(0.0, 1.0))


@pytest.fixture
def uniform_shifted():
    """Y ~ U(0,1), T ~ U(-0.5,0.5): Assumptions A and B, alpha = 0.875."""
    return TruncationModel(uniform(0.0, 1.0), uniform(-0.5, 0.5))


@pytest.fixture
def no_truncation():
    """T always below Y, so every draw is observed."""
    return TruncationModel(uniform(0.0, 1.0), uniform(-2.0, -1.0))


@pytest.fixture
def degenerate_below():
    """T is a point mass below the support of Y."""
    return TruncationModel(uniform(0.0, 1.0), point_mass(-1.0))


@pytest.fixture
def disjoint():
    """Y ~ U(0,1), T ~ U(2,3): nothing is ever observed."""
    return TruncationModel(uniform(0.0, 1.0), uniform(2.0, 3.0))


@pytest.fixture
def weak_only():
    """a_G = a_F but the integral of dF/G converges."""
    return TruncationModel(uniform(0.0, 1.0), weibull(0.5))


@pytest.fixture
def hand_sample():
    t, y = zip(*HAND_PAIRS)
    return TruncatedSample(t=np.asarray(t), y=np.asarray(y))


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path
