import numpy as np
import pytest

from crossworld.panel import PanelDataset, Trajectory


@pytest.fixture
def tiny_panel():
    units = [
        Trajectory(((0.5,), (1.0,)), (1, 0), 2.0),
        Trajectory(((-0.2,), (0.0,)), (0, 1), -1.5),
    ]
    return PanelDataset.from_trajectories(units)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record a one-line detail; the terminal summary prints
# one pass/fail line per criterion
_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance(request):
    def record(detail: str):
        _ACCEPTANCE[request.node.nodeid] = detail
        print(f"{request.node.name}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call" and "test_acceptance" in rep.nodeid:
                name = rep.nodeid.split("::")[-1]
                detail = _ACCEPTANCE.get(rep.nodeid, "no result recorded")
                lines.append((name, f"{outcome.upper()[:4]:<4} {name}: {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
