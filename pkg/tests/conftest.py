import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> (status, title, detail); printed once at the end of the run."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title}" + (f" ({detail})" if detail else ""))
