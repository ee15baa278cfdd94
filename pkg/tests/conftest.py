import pytest

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE = []


@pytest.fixture(scope="session")
def verdict():
    def record(number, title, passed, detail):
        ACCEPTANCE.append((number, title, passed, detail))
        print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
