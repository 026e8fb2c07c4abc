import numpy as np
import pytest

from fpme.spectral import DomainSpec, build_rfl_basis, build_rfl_matrix, build_sfl_basis


@pytest.fixture(scope="session")
def sfl_interval():
    return build_sfl_basis(DomainSpec.interval(199), 0.5)


@pytest.fixture(scope="session")
def sfl_square():
    return build_sfl_basis(DomainSpec.rectangle(16), 0.5)


@pytest.fixture(scope="session")
def rfl_interval():
    d = DomainSpec.interval(120)
    return build_rfl_basis(build_rfl_matrix(d, 0.5), domain=d, s=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
