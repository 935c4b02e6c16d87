import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reinforced_lsmc import GbmParams, StoppingProblem, StoppingSpec, simulate_gbm  # noqa: E402


@pytest.fixture(scope="session")
def call_d2():
    """Max-call on two assets, J=9, T=3, with small train and test samples."""
    problem = StoppingProblem(StoppingSpec(horizon=9, maturity=3.0, rate=0.05, state_dim=2))
    params = GbmParams(d=2, J=9, T=3.0)
    return problem, simulate_gbm(params, 4000, 11), simulate_gbm(params, 4000, 12)


@pytest.fixture(scope="session")
def swing_d2():
    """Three exercise rights on two assets, J=6."""
    problem = StoppingProblem(StoppingSpec(horizon=6, maturity=1.0, rate=0.05, state_dim=2, rights=3))
    params = GbmParams(d=2, J=6, T=1.0)
    return problem, simulate_gbm(params, 3000, 21), simulate_gbm(params, 3000, 22)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
