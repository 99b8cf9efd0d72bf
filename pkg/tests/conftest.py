import base64
import json
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


def _unpack(rec):
    bits = np.unpackbits(np.frombuffer(base64.b64decode(rec["bits"]), dtype=np.uint8))
    n = rec["height"] * rec["width"]
    return bits[:n].reshape(rec["height"], rec["width"]).astype(bool)


@pytest.fixture(scope="session")
def rle_golden():
    """Masks and their reference-coder RLE strings, captured before the build."""
    raw = json.loads((DATA / "rle_golden.json").read_text())
    masks = [(_unpack(r), r["rle"]) for r in raw["masks"]]
    named = {k: (_unpack(r), r["rle"]) for k, r in raw["named"].items()}
    return masks, named


_VERDICTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def verdict():
    """Record one acceptance line: ``verdict(number, passed, detail)``."""

    def record(number: int, passed: bool, detail: str) -> None:
        _VERDICTS.append((number, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
