import sys
from pathlib import Path

import pytest

from evasiontree import formats

SAMPLES = Path(__file__).resolve().parents[1] / "src" / "evasiontree" / "samples"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture
def samples():
    return SAMPLES


@pytest.fixture
def micro():
    return formats.read_tree(SAMPLES / "micro.at4ea")


@pytest.fixture
def two_scenarios():
    return formats.read_tree(SAMPLES / "two_scenarios.at4ea")


@pytest.fixture
def item_project():
    return SAMPLES / "item" / "project.yaml"


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
