import time

import numpy as np
import pytest

from platoon_dmpc import ScenarioConfig, run
from platoon_dmpc.sim import SimulationError

ACCEPTANCE_LINES: list[str] = []
SWEEP_SEEDS = tuple(range(1, 11))


@pytest.fixture(scope="session")
def reference_sweep():
    """The reference scenario over seeds 1..10.

    Returns ``(cfg, results, seconds)``; a seed that aborted maps to its
    SimulationError instead of a result.
    """
    cfg = ScenarioConfig.from_preset("reference")
    results, seconds = {}, {}
    for seed in SWEEP_SEEDS:
        t0 = time.perf_counter()
        try:
            results[seed] = run(cfg, seed)
        except SimulationError as exc:
            results[seed] = exc
        seconds[seed] = time.perf_counter() - t0
    return cfg, results, seconds


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
