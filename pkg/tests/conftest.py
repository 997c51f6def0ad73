import warnings

import pytest

from lenscat.diagnostics import TailResolutionWarning

ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str):
    """Log one acceptance line; also printed for ``pytest -s``."""
    ACCEPTANCE[criterion] = (passed, detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}")


@pytest.fixture(autouse=True)
def _quiet_tails():
    # random fields at desk-scale J touch the outer nodes by design
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailResolutionWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'} | {detail}")
