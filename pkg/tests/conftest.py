import numpy as np
import pytest

from delaynet import build_graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_edge(c=1.0, q=0.0):
    """One loop edge carrying the given profiles."""
    return build_graph({"edges": [{"id": "e", "tail": "v", "head": "v", "c": c, "q": q}]})


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULT_LINES
    except ImportError:
        return
    if RESULT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in RESULT_LINES:
            terminalreporter.write_line(line)
