from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from qconsensus.config import load_fixture

settings.register_profile("ci", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def ex1():
    return load_fixture("example1")


@pytest.fixture(scope="session")
def ex2():
    return load_fixture("example2")


@pytest.fixture(scope="session")
def ex3():
    return load_fixture("example3")


@pytest.fixture(scope="session")
def unstable2():
    return load_fixture("unstable2")


def random_system(rng: np.random.Generator, n_max: int = 4, m_max: int = 2, rho=(0.3, 1.3)):
    """Random (A, B) with the spectral radius of A drawn from ``rho``.

    Capping rho keeps the rate-scaled Riccati solution within a few orders
    of magnitude, where interior-point accuracy is meaningful.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    A = rng.normal(size=(n, n))
    A *= rng.uniform(*rho) / max(np.abs(np.linalg.eigvals(A)).max(), 1e-3)
    B = rng.normal(size=(n, m))
    return A, B
