import pytest
from hypothesis import settings

from gtries.model import validate_params

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg_u():
    return validate_params(["1/3", "1/3", "1/3"], 2)


@pytest.fixture(scope="session")
def cfg_n():
    return validate_params([0.5, 0.3, 0.2], 2)


@pytest.fixture(scope="session")
def classical():
    return validate_params([0.5, 0.5], 1)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
