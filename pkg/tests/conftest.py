import numpy as np
import pytest
from hypothesis import settings

from ltvdetect.bundled import load_example

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, ok, detail)``; asserts ``ok``."""

    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])


@pytest.fixture(scope="session")
def examples():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_example(name)[0]
        return cache[name]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
