import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.abspath(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from stabrad.problem_io import load_spec  # noqa: E402
from stabrad.utils_paths import bundled_problem  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks (run by default)")


@pytest.fixture(autouse=True)
def _isolated_config(monkeypatch, tmp_path):
    # no overlay file and no session log unless a test sets one
    monkeypatch.setenv("STABRAD_CONFIG", str(tmp_path / "no_config.json"))
    monkeypatch.delenv("STABRAD_SESSION_LOG", raising=False)


@pytest.fixture
def example1_spec():
    return load_spec(bundled_problem("example1"))


@pytest.fixture
def scalar_spec():
    return load_spec(bundled_problem("scalar"))


@pytest.fixture
def case1_spec():
    return load_spec(bundled_problem("case1"))


@pytest.fixture
def case2_spec():
    return load_spec(bundled_problem("case2"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
