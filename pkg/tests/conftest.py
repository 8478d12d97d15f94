import warnings

import pytest

warnings.filterwarnings("ignore", message=r".*httpx.*")


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: acceptance-gate criteria (may be slow)"
    )
