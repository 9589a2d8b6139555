import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")

X0 = np.array([[0.09, -0.036], [-0.036, 0.09]])


@pytest.fixture
def x0():
    return X0.copy()


@pytest.fixture(scope="session")
def bates_path():
    """One moderately sized reference-model path shared by several modules' tests."""
    from covfourier.core import TimeGrid
    from covfourier.simulator import BatesParams, simulate_bates

    return simulate_bates(BatesParams.reference(), TimeGrid(20000, 1.0), seed=2024)
