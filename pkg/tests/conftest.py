from __future__ import annotations

from pathlib import Path

import pytest

from wishart_edges.measure import AtomicMeasure

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def two_bulk() -> AtomicMeasure:
    return AtomicMeasure(((1.0, 0.7), (3.0, 0.3)))


@pytest.fixture
def spike_base() -> AtomicMeasure:
    return AtomicMeasure(((1.0, 209 / 299), (3.0, 90 / 299)))


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log() -> dict[int, str]:
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
