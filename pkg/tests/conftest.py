import math

import pytest

from rfklab import fem
from rfklab.geometry import DomainSpec, RobinPair

INF = math.inf


@pytest.fixture(scope="session")
def annulus12():
    return DomainSpec.annulus(1.0, 2.0)


@pytest.fixture(scope="session")
def eccentric025():
    return DomainSpec.annulus(1.0, 2.0, offset=(0.25, 0.0))


@pytest.fixture(scope="session")
def mesh_annulus_128(annulus12):
    return fem.build_mesh(annulus12, 128, 32)


@pytest.fixture(scope="session")
def eig_annulus_11(mesh_annulus_128):
    return fem.solve(mesh_annulus_128, RobinPair(1.0, 1.0))
