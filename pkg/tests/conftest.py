import logging
import os

import pytest

from glottisgate.synth import SynthConfig, generate

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def synth_default():
    return generate(SynthConfig())


@pytest.fixture
def acceptance():
    """Record a one-line verdict for an acceptance criterion."""
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    return record


@pytest.fixture(autouse=True)
def _no_log_env(monkeypatch):
    monkeypatch.delenv("GLOTTISGATE_LOG", raising=False)
    logger = logging.getLogger("glottisgate")
    level = logger.level
    yield
    logger.setLevel(level)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
    missing = [n for n in range(1, 13) if n not in ACCEPTANCE_LINES]
    if missing and os.environ.get("PYTEST_XDIST_WORKER") is None:
        terminalreporter.write_line(f"criteria not run: {missing}")
