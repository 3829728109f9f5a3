"""Acceptance battery: every criterion at its stated tolerance, one status line each."""
import os

import pytest

from lattice_ohm.acceptance import CRITERIA, run_criterion

WORKERS = max(1, min(4, os.cpu_count() or 1))


def test_battery_is_complete():
    assert sorted(CRITERIA) == list(range(1, 13))


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = run_criterion(number, workers=WORKERS)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
