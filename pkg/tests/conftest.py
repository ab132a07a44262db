from __future__ import annotations

from pathlib import Path

import pytest

from uwbloc.geometry import AnchorId, Point3

ROOT = Path(__file__).resolve().parents[1]

# Anchor coordinates of the five-anchor test room, meters.
ROOM = {
    AnchorId(0x02): Point3(0.81, 3.63, 3.01),
    AnchorId(0x03): Point3(0.81, 6.38, 3.01),
    AnchorId(0x04): Point3(6.31, 7.66, 2.83),
    AnchorId(0x05): Point3(6.72, 3.65, 2.64),
    AnchorId(0x06): Point3(2.77, 0.07, 0.91),
}

ROOM_TEXT = """\
0x02 0.81 3.63 3.01
0x03 0.81 6.38 3.01
0x04 6.31 7.66 2.83
0x05 6.72 3.65 2.64
0x06 2.77 0.07 0.91
"""


@pytest.fixture
def room_anchors() -> dict:
    return dict(ROOM)


@pytest.fixture
def room_file(tmp_path) -> Path:
    path = tmp_path / "anchors.txt"
    path.write_text(ROOM_TEXT)
    return path


_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome for the terminal summary."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
