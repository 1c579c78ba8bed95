"""Every numbered acceptance criterion at its stated tolerance.

One suite run (seed 7) feeds all tests; criterion 11 repeats it and
compares the CSV outputs byte for byte. Each test prints its pass/fail line.
"""

import csv

import numpy as np
import pytest

from fracslice.acceptance import CRITERIA, run_acceptance

NUMBERS = [n for n, _, _ in CRITERIA] + [11]


@pytest.fixture(scope="module")
def suite(tmp_path_factory, pytestconfig):
    out = tmp_path_factory.mktemp("acceptance")
    results = run_acceptance(7, str(out), determinism=True, echo=None)
    pytestconfig.acceptance_lines = [r.line() for r in results]
    return out, {r.number: r for r in results}


@pytest.mark.slow
@pytest.mark.parametrize("number", NUMBERS)
def test_criterion(suite, number):
    result = suite[1][number]
    print(result.line())
    assert result.passed, result.detail


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.slow
def test_criterion_10_bound_part(suite):
    # the lower-bound half of criterion 10, reported on its own
    rows = _rows(suite[0] / "run1" / "c10_bounds.csv")
    rate = np.mean([r["holds"] == "True" for r in rows])
    print(f"criterion 10 lower-bound pass rate {rate:.3f} (need >= 0.95)")
    assert len(rows) == 200 and rate >= 0.95


@pytest.mark.slow
def test_criterion_10_classification_part(suite):
    # the regime half of criterion 10, reported on its own
    rows = _rows(suite[0] / "run1" / "c10_traces.csv")
    frac = np.mean([r["label"] == "H-zero-evidence" for r in rows])
    print(f"criterion 10 H-zero-evidence fraction {frac:.2f} (need >= 0.60)")
    assert len(rows) == 100 and frac >= 0.6
