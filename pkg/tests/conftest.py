import numpy as np
import pytest

_ACCEPTANCE = {}


@pytest.fixture
def report():
    """``report(cid, ok, detail)`` records one acceptance line; also returns ``ok``."""

    def _report(cid, ok, detail=""):
        _ACCEPTANCE[cid] = (bool(ok), detail)
        print(f"[{cid}] {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return _report


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def order(cid):
        return int(cid[1:]) if cid[1:].isdigit() else 99

    for cid in sorted(_ACCEPTANCE, key=order):
        ok, detail = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid:>4} {'PASS' if ok else 'FAIL'}  {detail}")
