import pytest

from powertalk.sim import config as cfgmod
from powertalk.sim.engine import Engine


def run_engine(cfg):
    eng = Engine(cfg)
    log, metrics = eng.run()
    return eng, log, metrics


@pytest.fixture(scope="session")
def fig5():
    return run_engine(cfgmod.load("paper_fig5"))


@pytest.fixture(scope="session")
def fig6():
    return run_engine(cfgmod.load("paper_fig6"))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
