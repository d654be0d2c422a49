from __future__ import annotations

import threading

import pytest

from msgtriage.gateway import ModelSpec
from msgtriage.prompts import default_prompts_path, load_prompts
from msgtriage.taxonomy import StageLabelSets, load_default_taxonomy

# Filled by tests/test_acceptance.py; echoed after the run so the
# per-criterion lines survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def taxonomy():
    return load_default_taxonomy()


@pytest.fixture(scope="session")
def stage_labels(taxonomy):
    return StageLabelSets.all_leaves(taxonomy)


@pytest.fixture(scope="session")
def prompts():
    return load_prompts(default_prompts_path())


def make_mock_spec(name: str = "mock-model") -> ModelSpec:
    return ModelSpec(
        name=name,
        family="Mock",
        size_class="nano",
        endpoint_url="mock://fixed",
        request_timeout=5.0,
    )


class FakeClock:
    """Deterministic clock + sleeper pair for gateway timing tests."""

    def __init__(self, start: float = 1000.0):
        self._now = start
        self._lock = threading.Lock()

    def monotonic(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self._now += max(seconds, 0.0)
