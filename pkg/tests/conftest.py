import numpy as np
import pytest

from ritcbf.sim import build_rendezvous_scenario, build_stationkeeping_scenario


@pytest.fixture(scope="session")
def rendezvous_config():
    return build_rendezvous_scenario()


@pytest.fixture(scope="session")
def geo_config():
    return build_stationkeeping_scenario()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
