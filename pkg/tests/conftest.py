import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pnplayer import Params, make_grid  # noqa: E402
from pnplayer.steady import solve_pb  # noqa: E402


def steady(eps=1e-3, n_cells=400, **kw):
    prm = Params(epsilon=eps, **kw)
    return solve_pb(prm, make_grid(n_cells, eps, prm.derived.M))


@pytest.fixture(scope="session")
def ss3():
    """Equilibrium at eps = 1e-3 with the default Robin coefficient."""
    return steady(1e-3)


@pytest.fixture(scope="session")
def ss3_fine():
    return steady(1e-3, 800)


# acceptance lines are echoed again after the run so they survive capture
def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def criterion(request):
    def emit(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        print(line)
        request.config.acceptance_lines[number] = line
        return ok
    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
