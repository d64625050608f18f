import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uavrelay import SystemParams, build_cost_matrix  # noqa: E402
from uavrelay.channel import DiscretizationWarning  # noqa: E402

PAYLOADS = (1e6, 5e6, 10e6, 15e6, 20e6)


def quiet_params(**kw) -> SystemParams:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiscretizationWarning)
        return SystemParams(**kw)


@pytest.fixture(scope="session")
def defaults():
    return quiet_params()


@pytest.fixture(scope="session")
def cost_matrices():
    """Default-parameter cost matrices keyed by payload, built lazily."""
    cache = {}

    def get(L):
        if L not in cache:
            p = quiet_params(payload_L=L)
            cache[L] = (p, build_cost_matrix(p))
        return cache[L]

    return get


# acceptance verdicts, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {msg}")
