import os
import sys

import pytest


@pytest.fixture(scope="session", autouse=True)
def _psi_cache(tmp_path_factory):
    os.environ.setdefault("LACVAR_CACHE_DIR", str(tmp_path_factory.mktemp("cache")))
    yield


def pytest_terminal_summary(terminalreporter):
    mods = [m for name, m in sys.modules.items() if name.endswith("test_acceptance") and hasattr(m, "RESULTS")]
    lines = [line for m in mods for _, line in sorted(m.RESULTS.items())]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
