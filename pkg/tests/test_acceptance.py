"""Every acceptance criterion at its stated tolerance, one test each.

The suite runs once per session; a summary line per criterion is printed at
the end of the pytest run.
"""

import pytest

from mcflab.acceptance import run_suite

IDS = list(range(1, 19))
LINES = []


@pytest.fixture(scope="session")
def suite():
    results, _ = run_suite(seed=0, log=LINES.append)
    return {r.cid: r for r in results}


@pytest.mark.slow
@pytest.mark.parametrize("cid", IDS)
def test_criterion(suite, cid):
    r = suite[cid]
    print("%s criterion %d (%s): %s" % ("PASS" if r.passed else "FAIL", cid, r.name, r.measured))
    assert r.passed, "criterion %d: expected %s within %s, measured %s" % (
        cid, r.expected, r.tolerance, r.measured)
