"""Acceptance suite: one pass/fail line per criterion, each at its stated tolerance.

The lines are printed as the tests run (visible with ``-s``) and repeated in
the terminal summary.
"""
import pytest

from delaynet.acceptance import CRITERIA, run_criterion

RESULT_LINES = []


@pytest.mark.parametrize("number, name", [(n, name) for n, name, _ in CRITERIA], ids=[name for _, name, _ in CRITERIA])
def test_criterion(number, name):
    res = run_criterion(number)
    line = res.line()
    RESULT_LINES.append(line)
    print(line)
    assert res.passed, line
