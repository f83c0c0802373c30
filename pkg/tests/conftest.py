from __future__ import annotations

from pathlib import Path

import pytest

from autotara import xsam
from autotara.backends import FixtureBackend

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# one line per acceptance criterion, echoed after the run so the gate is
# visible even under pytest's output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter) -> None:
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fig3_path() -> Path:
    return FIXTURES / "fig3.xsam"


@pytest.fixture(scope="session")
def fig3_bytes(fig3_path) -> bytes:
    return fig3_path.read_bytes()


@pytest.fixture()
def fig3(fig3_bytes) -> xsam.SystemModel:
    return xsam.parse(fig3_bytes)


@pytest.fixture()
def backend() -> FixtureBackend:
    return FixtureBackend()


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return FIXTURES / "golden"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return FIXTURES / "corpus"
