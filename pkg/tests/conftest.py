import numpy as np
import pytest

from bnkinetic.grid_state import Distribution, VelocityGrid
from bnkinetic.kernel_geometry import KernelParams


def gaussian(N: int, V: float, amplitude: float = 0.05, temperature: float = 1.0, d: int = 3) -> Distribution:
    """Gaussian on the grid with sup norm ``amplitude``."""
    g = VelocityGrid(d, N, V)
    e = np.exp(-g.radius2 / (2.0 * temperature))
    return Distribution(g, amplitude * e / e.max())


@pytest.fixture
def hard_sphere():
    return KernelParams()


@pytest.fixture(scope="session")
def desk_gaussian():
    return gaussian(16, 6.0)
