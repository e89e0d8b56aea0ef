"""
Shared fixtures for the study test suite
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from effect_size import DesignDraws
from finite_sample_lab import EmpiricalDesign
from glm_core import Family, FamilyLink, Link


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale Monte Carlo checks")


@pytest.fixture
def logit():
    return FamilyLink(Family.BERNOULLI, Link.LOGIT)


@pytest.fixture
def two_point_draws(logit):
    """z = (1), x in {0, 1} with equal mass, beta = 1, intercept 0"""
    return DesignDraws.equal_mass(np.ones((2, 1)), np.array([0.0, 1.0]), logit)


@pytest.fixture
def two_point_design(logit):
    return EmpiricalDesign(
        x=np.array([[0.0], [1.0]]),
        z=np.ones((2, 1)),
        beta=np.array([1.0]),
        lam=np.array([0.0]),
        fl=logit,
    )
