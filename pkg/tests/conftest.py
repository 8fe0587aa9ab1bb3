import os

import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: full-fidelity acceptance criteria (slow Monte Carlo runs)"
    )


@pytest.fixture(scope="session")
def accept_jobs():
    """Worker processes for the heavy acceptance runs; results are identical
    for any value by construction."""
    env = os.environ.get("TRIALMSM_ACCEPT_JOBS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)
