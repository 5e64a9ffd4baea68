import os
import tempfile

# Keep test logs out of the project log directory
os.environ.setdefault("PAVI_LOG_DIR", os.path.join(tempfile.gettempdir(), "pavi_test_logs"))
os.environ.setdefault("PAVI_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte-Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
