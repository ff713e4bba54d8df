import time

import numpy as np
import pytest

from stap import ExpansionScenario, SplittingScenario
from stap.scenarios import run_expansion, run_splitting

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    """Keep one status line per acceptance criterion for the terminal summary."""
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES[number] = f"[{status}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def timed(func, *args, **kw):
    start = time.perf_counter()
    out = func(*args, **kw)
    return out, time.perf_counter() - start


@pytest.fixture(scope="session")
def split80():
    return SplittingScenario.from_si(t_f=0.08)


@pytest.fixture(scope="session")
def split10():
    return SplittingScenario.from_si(t_f=0.01)


@pytest.fixture(scope="session")
def split80_run(split80):
    """Full 80 ms splitting run (potentials and propagation) and its wall time."""
    return timed(run_splitting, split80)


@pytest.fixture(scope="session")
def split10_run(split10):
    return timed(run_splitting, split10)


@pytest.fixture(scope="session")
def expansion_run():
    return timed(run_expansion, ExpansionScenario())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
