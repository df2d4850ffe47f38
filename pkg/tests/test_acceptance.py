"""One test per acceptance criterion; conftest prints a pass/fail line for each."""

import pytest

from crindex import acceptance

RESULTS = {}


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number):
    result = acceptance.CHECKS[number - 1]()
    RESULTS[number] = result
    print(result.line())
    assert result.passed, result.as_dict()
