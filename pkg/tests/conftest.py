import pytest

from pamu import data_path

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture
def shift_path():
    return data_path("style_shift.jsonl")


@pytest.fixture
def sessions_path():
    return data_path("sessions.jsonl")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
