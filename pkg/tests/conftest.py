import pytest

from momentlab import SystemSpec, generate


@pytest.fixture(scope="session")
def heat50():
    return generate(SystemSpec.heat(), 50)


@pytest.fixture(scope="session")
def c2x2_50():
    return generate(SystemSpec.complex2x2(), 50)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """``record(criterion, passed, detail)``: one verdict line per acceptance item."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(criterion, passed, detail):
        line = f"criterion {criterion:>3}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
