import pytest

from boltzrep.core import Grid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid201():
    return Grid(201)


@pytest.fixture(scope="session")
def grid401():
    return Grid(401)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
