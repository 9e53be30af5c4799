"""
Pytest configuration and shared fixtures for klab tests.
"""

import pytest
import sys
from pathlib import Path

# Add the project root to the path so we can import utils
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from utils.config_loader import build_operator, load_config  # noqa: E402
from utils.evolution_solver import Exhaustion, SchemeParams  # noqa: E402


@pytest.fixture(scope="session")
def config():
    """Defaults merged with environment overrides."""
    return load_config()


@pytest.fixture(scope="session")
def ou_spec(config):
    """1-D Ornstein-Uhlenbeck operator with a = q = 1."""
    return build_operator({"preset": "ou"}, config)


@pytest.fixture(scope="session")
def heat_spec(config):
    """1-D heat operator."""
    return build_operator({"preset": "heat"}, config)


@pytest.fixture
def desk_scheme():
    """Coarse Crank-Nicolson settings for quick solver runs."""
    return SchemeParams(theta=0.5, dt=0.01, h=0.05)


@pytest.fixture
def desk_exhaustion():
    """Two exhaustion levels on small boxes."""
    return Exhaustion(R_start=6.0, R_step=2.0, max_levels=2, tol_exhaust=1e-3)
