from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from specsar.metrics import ConfusionMatrix, accumulate, exact_metrics, metrics


def test_four_pixel_example():
    cm = accumulate(ConfusionMatrix.empty(2), [0, 1, 1, 1], [0, 0, 1, 1])
    m = exact_metrics(cm)
    assert m["per_class_iou"] == [Fraction(1, 2), Fraction(2, 3)]
    assert m["miou"] == Fraction(7, 12)
    assert m["oa"] == Fraction(3, 4)
    assert m["f1"] == (Fraction(2, 3) + Fraction(4, 5)) / 2


def test_perfect_prediction(rng):
    t = rng.integers(0, 9, size=(5, 5))
    m = metrics(accumulate(ConfusionMatrix.empty(9), t, t))
    assert m["miou"] == m["oa"] == m["f1"] == 1.0


def test_absent_class_is_nan_and_excluded():
    m = metrics(accumulate(ConfusionMatrix.empty(3), [0, 1], [0, 1]))
    assert np.isnan(m["per_class_iou"][2]) and m["miou"] == 1.0


def test_out_of_range_labels():
    with pytest.raises(ValueError):
        accumulate(ConfusionMatrix.empty(2), [2], [0])


def _oracle(pred, truth, k):
    ious = []
    for c in range(k):
        tp = sum(1 for p, t in zip(pred, truth) if p == c and t == c)
        union = sum(1 for p, t in zip(pred, truth) if p == c or t == c)
        if union:
            ious.append(Fraction(tp, union))
    return sum(ious, Fraction(0)) / len(ious)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40))
def test_miou_matches_set_oracle(pairs):
    pred, truth = zip(*pairs)
    assert exact_metrics(accumulate(ConfusionMatrix.empty(4), pred, truth))["miou"] == _oracle(pred, truth, 4)


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.int64, 30, elements=st.integers(0, 2)), hnp.arrays(np.int64, 30, elements=st.integers(0, 2)))
def test_accumulation_is_additive(p, t):
    whole = accumulate(ConfusionMatrix.empty(3), p, t)
    parts = accumulate(ConfusionMatrix.empty(3), p[:11], t[:11]) + accumulate(ConfusionMatrix.empty(3), p[11:], t[11:])
    assert np.array_equal(whole.counts, parts.counts)
