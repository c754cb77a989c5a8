import contextlib

import numpy as np
import pytest

from mwrnet.data import GeneratorConfig, fit_normalization, generate_synthetic

ACCEPTANCE_LINES: dict[int, str] = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record a PASS/FAIL line for an acceptance criterion, re-raising failures."""
    try:
        yield
    except BaseException as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        ACCEPTANCE_LINES[number] = f"[criterion {number}] FAIL  {title}: {msg}"
        raise
    ACCEPTANCE_LINES[number] = f"[criterion {number}] PASS  {title}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(GeneratorConfig(n_cases=120, positive_fraction=0.25, seed=5))


@pytest.fixture(scope="session")
def small_x(small_dataset):
    return fit_normalization(small_dataset).apply(small_dataset.temps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
