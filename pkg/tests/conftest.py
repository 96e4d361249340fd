import math

import pytest

from gaussian_dynamics import PhysicalParams


@pytest.fixture
def default_params():
    """Reference experiment: g=1e-7, N_A=1e6, N_L=5e8, eta=0.5e-9."""
    return PhysicalParams()


@pytest.fixture
def ideal_params():
    """Reference experiment without scattering (eta = 0)."""
    return PhysicalParams(eta=0.0)


@pytest.fixture
def toy_params():
    return PhysicalParams(g=0.1, n_atoms=4, n_photons=8, eta=0.0)


@pytest.fixture
def half_chi_params():
    """Reference coupling with chi = 1/2."""
    return PhysicalParams(eta=math.log(2) / 5e8)
