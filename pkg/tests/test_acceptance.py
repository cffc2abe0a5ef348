"""Acceptance gate: the thirteen headline checks at their stated sizes.

Each criterion function measures everything itself and returns check rows;
a criterion passes when every row does.  This is the full-size suite (the
same one behind `lkg verify full`) and takes a few minutes end to end;
criterion 2 dominates the budget.
"""

import pytest

from latticekg.harness.verify import CRITERIA


@pytest.mark.parametrize(
    "num,fn",
    CRITERIA,
    ids=["criterion_%02d" % n for n, _ in CRITERIA],
)
def test_acceptance_criterion(num, fn):
    rows = fn(full=True)
    assert rows, "criterion %d produced no checks" % num
    failed = [r for r in rows if not r["pass"]]
    detail = "; ".join(
        "%s: required %s, measured %r" % (r["name"], r["required"], r["measured"])
        for r in failed
    )
    assert not failed, detail
