# conftest.py
# Shared fixtures: quadrature profiles, base points and a small gallery of states.

import pytest

from correlators import get_profile
from minkowski import FourVector, InverseTemperatureVector, boosted_time_direction
from spectral_kernels import KMS, HotBang, Mixture, MixtureComponent, Vacuum


@pytest.fixture(scope="session")
def profile():
    return get_profile("default")


@pytest.fixture(scope="session")
def fast_profile():
    return get_profile("fast")


@pytest.fixture
def origin_q():
    return FourVector(1.0, 0.0, 0.0, 0.0)


@pytest.fixture
def rest_beta():
    return InverseTemperatureVector(1.0)


@pytest.fixture
def boosted_beta():
    return InverseTemperatureVector(1.0, boosted_time_direction(1.0))


# -- Gallery --

def _kms(beta=1.0, rapidity=0.0, mass=0.0):
    direction = boosted_time_direction(rapidity) if rapidity else None
    vec = InverseTemperatureVector(beta, direction) if direction else InverseTemperatureVector(beta)
    return KMS(vec, mass=mass)


def _mixture(weights=(0.5, 0.5), betas=(1.0, 2.0), mass=0.0):
    return Mixture(
        components=tuple(
            MixtureComponent(w, InverseTemperatureVector(b)) for w, b in zip(weights, betas)
        ),
        mass=mass,
    )


@pytest.fixture
def vacuum():
    return Vacuum()


@pytest.fixture
def hotbang():
    return HotBang(A=1.0)


@pytest.fixture
def half_half_mixture():
    return _mixture()


@pytest.fixture
def make_kms():
    return _kms


@pytest.fixture
def make_mixture():
    return _mixture
