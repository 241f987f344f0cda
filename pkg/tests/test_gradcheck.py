"""Tests for gradcheck module."""
import pytest

from pairconf.gradcheck import HEAD_CYCLE, Head, check_case, run_gradcheck
from pairconf.tensor import Activation


def test_gradients_match_on_a_few_cases():
    """Six cases cover every head under both activations."""
    report = run_gradcheck(seed=0, cases=6)
    assert report.passed
    assert len(report.cases) == 6
    assert {case.head for case in report.cases} == set(HEAD_CYCLE)
    assert {case.activation for case in report.cases} == {Activation.RELU, Activation.TANH}
    assert all(case.entries > 0 for case in report.cases)
    assert report.lines()[-1] == "all gradients match"


def test_case_schedule():
    """Heads cycle by index mod 3, activations by index mod 2."""
    result = check_case(4, 123)
    assert result.head is Head.CONFUSION_ONLY
    assert result.activation is Activation.RELU
    assert result.seed == 123
    assert result.passed


def test_report_is_deterministic():
    """Same seed, same lines."""
    assert run_gradcheck(7, 3).lines() == run_gradcheck(7, 3).lines()


def test_worst_case_is_named():
    """The summary line names the seed of the worst case."""
    report = run_gradcheck(1, 3)
    assert f"case seed {report.worst.seed}" in report.lines()[-2]


def test_rejects_zero_cases():
    """At least one case is required."""
    with pytest.raises(ValueError):
        run_gradcheck(0, 0)


def test_clean_run_still_reports_its_largest_error():
    """A passing run names a non-zero worst absolute error and its case."""
    report = run_gradcheck(2, 4)
    assert report.passed
    largest = report.worst_absolute
    assert largest.worst_abs == max(case.worst_abs for case in report.cases) > 0.0
    assert report.lines()[-3] == (
        f"worst absolute error {largest.worst_abs!r} (case seed {largest.seed})"
    )
