import numpy as np
import pytest

from gsep.datapipe.synth import SpeakerProfile


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def four_speakers():
    """Two female and two male synthetic speakers with fixed parameters."""
    return [
        SpeakerProfile("fa", "F", (190.0, 250.0), ((600.0, 90.0), (1700.0, 120.0), (2800.0, 170.0))),
        SpeakerProfile("fb", "F", (165.0, 215.0), ((560.0, 100.0), (1550.0, 130.0), (2650.0, 190.0))),
        SpeakerProfile("ma", "M", (90.0, 130.0), ((480.0, 80.0), (1400.0, 110.0), (2350.0, 160.0))),
        SpeakerProfile("mb", "M", (110.0, 150.0), ((520.0, 90.0), (1450.0, 120.0), (2450.0, 180.0))),
    ]


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
