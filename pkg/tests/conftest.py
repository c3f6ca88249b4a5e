import os

from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

HERE = os.path.dirname(__file__)
GOLDEN = os.path.join(HERE, "golden")

import functools
import time

import pytest

from lanetow.harness import run_scenario
from lanetow.scenario import builtin_scenario_path, load_scenario


RUN_SECONDS = {}


@functools.lru_cache(maxsize=None)
def _builtin_run(name: str):
    cfg = load_scenario(builtin_scenario_path(name))
    t0 = time.perf_counter()
    report = run_scenario(cfg)
    RUN_SECONDS[name] = time.perf_counter() - t0
    return cfg, report


@pytest.fixture(scope="session")
def builtin_run():
    """``builtin_run(name)`` -> (config, report), each scenario run once per session."""
    return _builtin_run


SHORT = """
[scenario]
name = short
seed = 5
duration = {duration}
[initial]
y = {y}
[lane a]
points =
    -2 0
    20 0
"""


def short_scenario(duration=4, y=0.0, extra=""):
    from lanetow.scenario import parse_scenario
    return parse_scenario(SHORT.format(duration=duration, y=y) + extra, "short")


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE = {}
N_CRITERIA = 10
_ACCEPTANCE_COLLECTED = []


def pytest_collection_modifyitems(items):
    if any(item.module.__name__.endswith("test_acceptance") for item in items):
        _ACCEPTANCE_COLLECTED.append(True)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_COLLECTED:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n not in ACCEPTANCE:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
            continue
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
