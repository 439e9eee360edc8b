import numpy as np
import pytest

from solwave.model import Grid, NonlinearCoupling, solitary_from_C


@pytest.fixture(scope="session")
def linear_coupling():
    return NonlinearCoupling.polynomial([1.0, 1.0])


@pytest.fixture(scope="session")
def stable_wave(linear_coupling):
    """``a(s) = 1 + s`` at ``C = 1``: ``kappa = omega = 1``, no nonzero eigenvalues."""
    return solitary_from_C(linear_coupling, 1.0)


@pytest.fixture(scope="session")
def stable_grid(stable_wave):
    return Grid.for_wave(stable_wave)


@pytest.fixture(scope="session")
def oscillatory_wave(linear_coupling):
    return solitary_from_C(linear_coupling, 2.0)


@pytest.fixture(scope="session")
def unstable_wave():
    return solitary_from_C(NonlinearCoupling.polynomial([-1.0, 2.0]), 1.2)


def gaussian(grid, center=0.0, width=1.0, amp=1.0):
    return amp * np.exp(-((grid.x - center) / width) ** 2)
