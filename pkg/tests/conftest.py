import os
import tempfile

# Library modules open their log files at import time
os.environ.setdefault("CHANCEX_LOG_DIR", tempfile.mkdtemp(prefix="chancex-logs-"))

import math
from dataclasses import replace

import pytest

from chancexLib.agent import AgentConfig, GoalPrior, WindProfile
from chancexLib.chance_constraint import ChanceConstraintSpec, SafeRegion


@pytest.fixture
def reference_agent():
    """T=1, epsilon=0.01, v_w=0.2, lambda=1e-12, calm wind, default delta and EM budget."""
    return AgentConfig()


@pytest.fixture
def tight_agent(reference_agent):
    """The reference agent with delta=1e-6 and a converged EM loop."""
    spec = ChanceConstraintSpec(SafeRegion(1.0, math.inf), epsilon=0.01, delta=1e-6)
    return replace(reference_agent, driver=spec, em_max_iters=200, em_tol=1e-9)


@pytest.fixture
def goal_agent():
    return AgentConfig(
        horizon=1,
        wind_mean_profile=WindProfile.calm(),
        wind_variance=0.2,
        control_precision=1e-12,
        driver=GoalPrior(2.0, 0.18478),
        em_max_iters=200,
        em_tol=1e-9
    )
