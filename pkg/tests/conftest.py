import random
from pathlib import Path

import pytest
from hypothesis import settings

from toucan.keystore import KeyRecord, KeyStore, parse_keystore

# first calls may trigger JIT compilation
settings.register_profile("toucan", deadline=None)
settings.load_profile("toucan")

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parents[1] / "src" / "toucan" / "data"


def read_vectors(name):
    rows = []
    for line in (FIXTURES / name).read_text().splitlines():
        if line and not line.startswith("#"):
            rows.append(line.split(","))
    return rows


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def record():
    return KeyRecord(0x000, 0x7FF, bytes(range(16)), bytes(range(16, 32)))


@pytest.fixture
def demo_keys() -> KeyStore:
    return parse_keystore((DATA / "demo_keys.txt").read_text())


ACCEPTANCE_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the test still asserts on its own."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_RESULTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
