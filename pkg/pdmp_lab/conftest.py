"""
Shared pytest fixtures and hypothesis profiles
"""

import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from pdmp_lab.model import builtin_model
from pdmp_lab.rng import RngStream

settings.register_profile('default', max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile('thorough', max_examples=2000, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.getenv('HYPOTHESIS_PROFILE', 'default'))


@pytest.fixture
def lines():
    return builtin_model('contracting-lines')


@pytest.fixture
def dirac():
    return builtin_model('dirac-trap')


@pytest.fixture
def rotor():
    return builtin_model('planar-rotor')


@pytest.fixture
def rng():
    return RngStream(20240601)
