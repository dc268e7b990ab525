import os

import pytest

from entropy_american import (LambdaSchedule, LatticeModel, MarketModel, Payoff, RunConfig,
                              TimeGrid, run_pia)

FULL = os.environ.get("ENTROPY_AMERICAN_FULL", "") not in ("", "0")


def pytest_collection_modifyitems(config, items):
    if FULL:
        return
    skip = pytest.mark.skip(reason="full-scale run; set ENTROPY_AMERICAN_FULL=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def put_model():
    return MarketModel(1, (100.0,), 0.05, 0.0, 0.2)


@pytest.fixture(scope="session")
def put_payoff():
    return Payoff.put(100.0)


@pytest.fixture(scope="session")
def put_lattice(put_model):
    return LatticeModel(put_model, TimeGrid(1.0, 200))


@pytest.fixture(scope="session")
def put_mc_run(put_model, put_payoff):
    """Ladder run down to lambda = 0.001 on the one-asset put, M = 100000, N = 100."""
    config = RunConfig(model=put_model, payoff=put_payoff, grid=TimeGrid(1.0, 100),
                       paths=100000, seed=7, dual=True, out_of_sample=True,
                       schedule=LambdaSchedule.ladder(0.001, per_stage=100, total=None))
    report, surface = run_pia(config)
    return config, report, surface


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for module in list(sys.modules.values()):
        lines += getattr(module, "ACCEPTANCE_RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
