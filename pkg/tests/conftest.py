import numpy as np
import pytest

from modsynth import fixtures, modlib


@pytest.fixture(scope="session")
def small_lib():
    return fixtures.small_library()


@pytest.fixture(scope="session")
def mixed_lib():
    return fixtures.mixed_library()


@pytest.fixture(scope="session")
def arm6(small_lib):
    return modlib.assemble(small_lib, fixtures.ARM6_IDS)


@pytest.fixture(scope="session")
def planar2(small_lib):
    return modlib.assemble(small_lib, fixtures.PLANAR2_IDS)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
