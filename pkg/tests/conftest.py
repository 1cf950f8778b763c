import pytest

# (criterion number, title, passed, detail) filled in by test_acceptance
ACCEPTANCE: list = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
