"""Acceptance gate: every exit criterion at its pinned tolerance.

The suite is executed once per test session (the smooth trajectory and
the degenerate continuation are shared across criteria) and each test
asserts one criterion, printing its pass/fail line. Expect a long run:
the degenerate continuation alone takes tens of minutes at N=64.
"""

import pytest

from jflowlab.acceptance import ALL_CRITERIA, run_suite


@pytest.fixture(scope="module")
def suite_results():
    results = run_suite(seed=0)
    return {res.key: res for res in results}


@pytest.mark.parametrize("key", [key for key, _ in ALL_CRITERIA])
def test_criterion(suite_results, key):
    res = suite_results[key]
    status = "PASS" if res.passed else "FAIL"
    print(f"{status} {res.key} ({res.runtime_s:.1f}s): {res.summary}")
    assert res.passed, f"{res.key}: {res.summary} | details: {res.details}"
