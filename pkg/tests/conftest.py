"""Shared fixtures: solved problems are expensive enough to build once."""

import numpy as np
import pytest

from schrochaos.fixtures import build_problem


@pytest.fixture(scope="session")
def sym2():
    return build_problem("sym2")


@pytest.fixture(scope="session")
def asym23():
    return build_problem("asym23")


@pytest.fixture(scope="session")
def problems(sym2, asym23):
    return {"sym2": sym2, "asym23": asym23}


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.Philox(key=np.array([1234, 0], dtype=np.uint64)))
