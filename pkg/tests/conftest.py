import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from hovmerge.vehicle_model import ControlParams  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale sweeps and full-scale runs (minutes or more)")


@pytest.fixture
def params():
    return ControlParams()
