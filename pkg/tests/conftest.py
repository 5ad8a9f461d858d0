import numpy as np
import pytest

from eqopp.population import Population


def hand_population():
    """Eight people, hand-enumerable.

    group  score  label   (decision at p = 0.5)
    A      0.9    1       selected   tp
    A      0.7    0       selected   fp
    A      0.4    1       rejected   fn
    A      0.2    0       rejected   tn
    B      0.8    1       selected   tp
    B      0.6    1       selected   tp
    B      0.3    0       rejected   tn
    B      0.1    1       rejected   fn
    """
    return Population.from_labels(
        list("AAAABBBB"),
        [0.9, 0.7, 0.4, 0.2, 0.8, 0.6, 0.3, 0.1],
        label=np.array([1, 0, 1, 0, 1, 1, 0, 1]),
    )


@pytest.fixture
def hand_pop():
    return hand_population()


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
