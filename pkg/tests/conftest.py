import numpy as np
import pytest

from sbsim.building import SimulationConfig, WeatherConfig
from sbsim.fd import ThermalState
from sbsim.grid import OrientedFields
from sbsim.synth import office_building


def slab_fields(n: int, k: float, rho: float, c: float, dx: float, area: float = 1.0):
    """Hand-built fields for a 1 x (n + 2) rod: pinned cells at both ends,
    ``n`` CVs of length ``dx`` between them, no lateral losses."""
    shape = (1, n + 2)
    ext = np.zeros(shape, dtype=bool)
    ext[0, [0, -1]] = True
    g = k * area / dx
    G = np.zeros((4,) + shape)
    G[0, 0, 1:-1] = g   # left and right faces of the inside cells; the
    G[2, 0, 1:-1] = g   # pinned cells carry no conductance of their own
    zero = np.zeros((4,) + shape)
    full = np.full(shape, dx)
    vol = np.where(ext, 0.0, area * dx)
    return OrientedFields(K=zero, H=zero, U=full, V=full, C=np.full(shape, c),
                          P=np.full(shape, rho), G=G, HA=zero, volume=vol, exterior=ext,
                          z=area / dx, cv_size=dx)


@pytest.fixture
def small_building():
    """Two rooms side by side, 4 x 5 CVs of 1 m each."""
    return office_building(1, 2, 4, 5, weather=WeatherConfig("constant", 10.0),
                           simulation=SimulationConfig(timestep=300.0))


@pytest.fixture
def four_room_building():
    return office_building(2, 2, 5, 6)


@pytest.fixture
def uniform_state():
    def make(shape, temperature=20.0):
        return ThermalState.uniform(shape, temperature)
    return make
