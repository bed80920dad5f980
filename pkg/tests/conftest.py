"""
Pytest configuration and common fixtures for the pdls solver toolkit
"""
import pytest
import sys
from pathlib import Path

# Add project root to Python path for all tests
sys.path.insert(0, str(Path(__file__).parent.parent))

from model import make_instance  # noqa: E402
from solver_config import reset_settings, get_settings  # noqa: E402


@pytest.fixture(scope="session")
def project_root():
    """Return the project root directory"""
    return Path(__file__).parent.parent


@pytest.fixture
def w1():
    """Two chains [1,2] and [3] that can all finish on time"""
    return make_instance(
        [(1, 2, 5, 3), (2, 1, 1, 3), (3, 3, 4, 6)],
        [[1, 2], [3]],
    )


@pytest.fixture
def w2():
    """Two chains [1,2] and [3] with optimum penalty 4"""
    return make_instance(
        [(1, 2, 3, 2), (2, 2, 1, 4), (3, 2, 4, 2)],
        [[1, 2], [3]],
    )


@pytest.fixture
def settings():
    """Settings loaded from the bundled config/solver.yaml"""
    return get_settings()


@pytest.fixture(autouse=True)
def setup_test_environment(monkeypatch):
    """Every test starts from the default config file"""
    monkeypatch.delenv("PDLS_CONFIG", raising=False)
    reset_settings()
    yield
    reset_settings()


def pytest_configure(config):
    """Configure pytest with custom markers"""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "unit: marks tests as unit tests"
    )


def pytest_collection_modifyitems(config, items):
    """Automatically mark tests based on their names"""
    for item in items:
        if "test_acceptance" in item.nodeid:
            item.add_marker(pytest.mark.slow)
            item.add_marker(pytest.mark.integration)
        elif "test_cli" in item.nodeid or "test_bench_store" in item.nodeid:
            item.add_marker(pytest.mark.integration)
        else:
            item.add_marker(pytest.mark.unit)
