import os

import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
EX_B_DIR = os.path.join(FIXTURES, "ex_b")


@pytest.fixture
def ex_b_dir():
    return EX_B_DIR


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
