"""
Shared test configuration.

The end-to-end check on the german credit dataset is skipped unless
VIGPC_GERMAN_PATH points to a copy of the dataset in libsvm format.
"""

import os
from types import SimpleNamespace

import pytest
import test_utils

german_path = os.environ.get("VIGPC_GERMAN_PATH")


def pytest_configure(config):
    pytest.vigpc_data = SimpleNamespace(
        GERMAN_PATH=german_path,
        TEST_GERMAN=german_path is not None and os.path.isfile(german_path),
    )
    test_utils.set_vigpc_loggers(disable=True)
