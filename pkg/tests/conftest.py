import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparse_damage.fem_truss import canonical_truss
from sparse_damage.modal import model_modes

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def truss():
    return canonical_truss()


@pytest.fixture(scope="session")
def nominal_modes(truss):
    return model_modes(truss)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
