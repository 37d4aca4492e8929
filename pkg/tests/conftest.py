import numpy as np
import pytest

from sbmrom import Box, ProblemData, YCenterRectangle, build_structured_mesh

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, title: str, ok: bool, detail: str = "") -> bool:
    line = f"[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def exp1_mesh():
    """Background mesh of the y-center experiment."""
    return build_structured_mesh(Box(-2.0, 2.0, -1.0, 1.0), 0.035)


@pytest.fixture(scope="session")
def coarse_mesh():
    """Same box, coarse enough for brute-force oracles."""
    return build_structured_mesh(Box(-2.0, 2.0, -1.0, 1.0), 0.14)


@pytest.fixture(scope="session")
def ycenter():
    return YCenterRectangle()


@pytest.fixture
def problem():
    return ProblemData()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
