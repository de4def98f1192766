import json
import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from iotrisk.builder import build_system, parse_system_spec  # noqa: E402
from iotrisk.cvss import score_all_nodes  # noqa: E402
from iotrisk.propagation import propagate_scores  # noqa: E402


def load_data(name: str):
    return json.loads(resources.files("iotrisk.data").joinpath(name).read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def smart_home_doc():
    return load_data("smart_home.json")


@pytest.fixture(scope="session")
def _smart_home_built(smart_home_doc):
    g = build_system(parse_system_spec(smart_home_doc))
    score_all_nodes(g)
    _, cycles = propagate_scores(g)
    g.provenance["cycles"] = cycles
    return g


@pytest.fixture
def smart_home(_smart_home_built):
    """A fresh, scored and propagated copy of the smart-home fixture."""
    return _smart_home_built.copy()


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
