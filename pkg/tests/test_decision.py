import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volclass.decision import REST, ClassRegistry, DecisionPolicy, decide
from volclass.errors import ShapeMismatch

REG3 = ClassRegistry(["a", "b", "c"])
REG4_REST = ClassRegistry(["a", "b", "c", "misc"], rest_class_index=3)


def test_clear_winner():
    res = decide([0.012, 0.893456, 0.051, 0.0004], ClassRegistry(["a", "b", "c", "d"]))
    assert res.chosen == "b"
    assert res.confidence == pytest.approx(0.893456)
    assert not res.rejected


def test_threshold_rejects_to_rest_literal():
    res = decide([0.4, 0.45, 0.3], REG3, DecisionPolicy(threshold=0.5))
    assert res.chosen == REST and res.rejected
    assert res.confidence == pytest.approx(0.45)


def test_threshold_rejects_to_registered_rest():
    res = decide([0.4, 0.45, 0.3, 0.1], REG4_REST, DecisionPolicy(threshold=0.5))
    assert res.chosen == "misc" and res.rejected


def test_threshold_at_boundary_accepts():
    assert decide([0.5, 0.2, 0.1], REG3, DecisionPolicy(threshold=0.5)).chosen == "a"


def test_tie_goes_to_lowest_index():
    assert decide([0.7, 0.7, 0.7], REG3).chosen == "a"
    assert decide([0.1, 0.7, 0.7], REG3).chosen == "b"


def test_rest_output_can_win():
    res = decide([0.1, 0.2, 0.1, 0.9], REG4_REST)
    assert res.chosen == "misc" and not res.rejected


def test_rest_output_ignored_when_disabled():
    res = decide([0.1, 0.2, 0.1, 0.9], REG4_REST, DecisionPolicy(use_rest_class=False))
    assert res.chosen == "b"
    assert "misc" not in res.scores


def test_disabled_rest_rejects_to_literal():
    res = decide([0.1, 0.2, 0.1, 0.9], REG4_REST, DecisionPolicy(use_rest_class=False, threshold=0.5))
    assert res.chosen == REST and res.rejected


def test_length_mismatch():
    with pytest.raises(ShapeMismatch):
        decide([0.1, 0.2], REG3)


@pytest.mark.parametrize("t", [-0.1, 1.5])
def test_bad_threshold(t):
    with pytest.raises(ValueError):
        DecisionPolicy(threshold=t)


def test_registry_validation():
    with pytest.raises(ValueError):
        ClassRegistry(["a", "a"])
    with pytest.raises(ValueError):
        ClassRegistry(["a"], rest_class_index=2)


def test_as_dict():
    d = decide([0.2, 0.8, 0.1], REG3).as_dict()
    assert d["chosen"] == "b" and set(d["scores"]) == {"a", "b", "c"}


scores3 = st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3)


@settings(max_examples=200)
@given(s=scores3, k=st.floats(0.01, 1.0))
def test_argmax_invariant_under_scaling(s, k):
    assert decide(s, REG3).chosen == decide(np.array(s) * k, REG3).chosen


@settings(max_examples=200)
@given(s=scores3, t1=st.floats(0, 1), t2=st.floats(0, 1))
def test_higher_threshold_never_rejects_less(s, t1, t2):
    lo, hi = sorted((t1, t2))
    if decide(s, REG3, DecisionPolicy(threshold=lo)).rejected:
        assert decide(s, REG3, DecisionPolicy(threshold=hi)).rejected


@settings(max_examples=200)
@given(s=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_rest_class_without_threshold_never_rejects(s):
    res = decide(s, REG4_REST)
    assert not res.rejected
    assert res.chosen in REG4_REST.classes
