"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints its ``criterion N [PASS|FAIL]`` line; the lines are also
collected into a block at the end of the pytest terminal summary.
"""

import pytest

from nullflow.scenarios import CHECKS

from conftest import ACCEPTANCE_LINES


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number, capsys):
    check = CHECKS[number]()
    line = check.line()
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert check.passed, line
