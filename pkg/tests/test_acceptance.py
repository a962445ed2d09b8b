"""Acceptance suite: every criterion at its stated tolerance and runtime budget.

Each test prints one ``[PASS]``/``[FAIL]`` line (visible with ``pytest -s`` or in
the captured output of a failure) and asserts the verdict.
"""
import pytest

from kirchhoff_nf.acceptance import CRITERIA


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    result = CRITERIA[number]()
    print(result.line())
    for key, value in result.observed.items():
        print(f"    {key} = {value:.6g}")
    assert result.passed, result.line()
