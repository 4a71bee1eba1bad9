import numpy as np
import pytest
from hypothesis import given, strategies as st

from distress_screen.decision import DecisionKind, classify_score

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_examples():
    assert classify_score(0.7, 0.5).kind is DecisionKind.EARLY_INTERVENTION
    assert classify_score(0.5, 0.5).kind is DecisionKind.REGULAR_MONITORING
    assert classify_score(0.2, 0.5).kind is DecisionKind.REGULAR_MONITORING
    assert classify_score(0.51).threshold == 0.5


def test_serialized_strings():
    assert DecisionKind.EARLY_INTERVENTION.value == "early_intervention"
    assert DecisionKind.REGULAR_MONITORING.value == "regular_monitoring"


@pytest.mark.parametrize("score,threshold", [(-0.1, 0.5), (1.1, 0.5), (0.5, 2.0), (float("nan"), 0.5)])
def test_out_of_range(score, threshold):
    with pytest.raises(ValueError):
        classify_score(score, threshold)


@given(unit, unit, unit)
def test_monotone(s1, s2, th):
    lo, hi = sorted((s1, s2))
    if classify_score(lo, th).kind is DecisionKind.EARLY_INTERVENTION:
        assert classify_score(hi, th).kind is DecisionKind.EARLY_INTERVENTION


@given(unit, unit)
def test_depends_only_on_score_and_threshold(s, th):
    a = classify_score(s, th, task_tag="ptsd")
    b = classify_score(s, th, task_tag="depression")
    assert a.kind is b.kind
    assert (a.kind is DecisionKind.EARLY_INTERVENTION) == (s > th)
