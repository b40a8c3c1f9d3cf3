import pytest

from starqkd.scenario_file import beijing
from starqkd.simulator import calibrate_scenario, run_mode_comparison

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def beijing_scenario():
    return beijing()


@pytest.fixture(scope="session")
def beijing_calibrated(beijing_scenario):
    return calibrate_scenario(beijing_scenario)


@pytest.fixture(scope="session")
def beijing_runs(beijing_calibrated):
    """Single and concentration reports at the bundled settings (10^7 pulses, seed 42)."""
    return run_mode_comparison(beijing_calibrated)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
