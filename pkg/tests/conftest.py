import math

import numpy as np
import pytest

from hillspps import RazavyParams, build_discriminant, razavy_phi, table_for
from hillspps.potential import PeriodicScalarPotential


@pytest.fixture(scope="session")
def free_table():
    return table_for(PeriodicScalarPotential.zero(math.pi, 5000), 100)


@pytest.fixture(scope="session")
def free_poly(free_table):
    return build_discriminant(free_table)


_cache = {}


def razavy_table(xi, M=5000, N=100):
    key = (xi, M, N)
    if key not in _cache:
        _cache[key] = table_for(razavy_phi(RazavyParams(xi), M), N)
    return _cache[key]


@pytest.fixture(scope="session")
def razavy():
    """``razavy(xi) -> (table, poly)`` at M = 5000, N = 100, built once per session."""
    polys = {}

    def get(xi):
        if xi not in polys:
            polys[xi] = build_discriminant(razavy_table(xi))
        return razavy_table(xi), polys[xi]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
