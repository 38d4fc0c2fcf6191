import numpy as np
import pytest

from horseshoe_lab import SolverHints, solve_params


@pytest.fixture(scope="session")
def p():
    return solve_params(SolverHints())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
