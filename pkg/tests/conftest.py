import pytest

from chlab.lie_models import ModelSpec, build_model
from chlab.torus_grid import TorusContactSpec, build_torus_model


def sl2(lam=1, vol=1.0):
    return build_model(ModelSpec("sl2", {"lambda": lam}, vol))


@pytest.fixture(scope="session")
def sl2_1():
    return sl2(1)


@pytest.fixture(scope="session")
def torus16():
    return build_torus_model(TorusContactSpec(1), n=16)


@pytest.fixture(scope="session")
def torus32():
    return build_torus_model(TorusContactSpec(1), n=32)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(mod.RESULTS):
        terminalreporter.write_line(mod._line(i, *mod.RESULTS[i]))
