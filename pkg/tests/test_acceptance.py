"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS/FAIL lines as
they complete.  The full gate takes several minutes (reference grid solves at
n=256 and 2e4 game trajectories).
"""

import pytest

from plap._criteria import CRITERIA


@pytest.mark.parametrize("name", list(CRITERIA), ids=list(CRITERIA))
def test_acceptance(name):
    ok, detail = CRITERIA[name]()
    print(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{name} FAIL: {detail}"
