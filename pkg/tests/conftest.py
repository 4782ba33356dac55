import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: longer Monte Carlo or stress runs")


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import RESULTS

    lines = RESULTS.lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
