"""The nine acceptance criteria, one test each.

Every test prints its verdict line (``criterion N PASS|FAIL ...``) straight to
the terminal, so ``pytest tests/test_acceptance.py`` shows the full gate even
without ``-s``.  Criteria 4 and 5 share one run of the shipped corpus.
"""

import pytest

from physarum import acceptance


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, corpus_dir, capsys):
    fn = acceptance.CRITERIA[number]
    if number in acceptance.CORPUS_CRITERIA:
        result = fn(corpus_dir, "strict", 1)
    else:
        result = fn()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
    assert result.within_budget, f"{result.elapsed:.1f}s exceeds the {result.budget}s budget"
