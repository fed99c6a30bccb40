import numpy as np
import pytest

from vidident.providers.mock import MockProviderSet
from vidident.providers.scenes import SceneRegistry


@pytest.fixture
def mock_providers():
    return MockProviderSet(seed=0)


@pytest.fixture
def registry():
    return SceneRegistry()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240817))


def random_frame(rng, h=32, w=32):
    return rng.integers(0, 256, (h, w, 3)).astype(np.uint8)
