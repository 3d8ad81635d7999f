import math

import numpy as np
import pytest

from mimeticfd.grid import MappingSpec, build_grid
from mimeticfd.mimetic_ops import build_bundle

SQRT2 = math.sqrt(2.0)

SKEW = MappingSpec("sinusoidal-skew", {"a": 0.1, "b": 0.1})
FOURIER = MappingSpec("fourier-perturbation", seed=1)
UNIFORM = MappingSpec("uniform")


@pytest.fixture(scope="session")
def skew_bundle():
    return build_bundle(build_grid(SKEW, 16, 16, 4))


@pytest.fixture(scope="session")
def fourier_bundle():
    return build_bundle(build_grid(FOURIER, 16, 16, 4))


@pytest.fixture(scope="session")
def uniform_bundle():
    return build_bundle(build_grid(UNIFORM, 16, 16, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
