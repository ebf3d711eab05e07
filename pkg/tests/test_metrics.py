import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from qjet.metrics import UndefinedAUCError, accuracy, mann_whitney_auc, roc_auc, roc_curve, trapezoid_auc


def pairwise_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (pos.size * neg.size)


@st.composite
def scored_labels(draw):
    n = draw(st.integers(2, 60))
    labels = np.array(draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    # a coarse grid of values makes ties common
    scores = np.array(draw(st.lists(st.integers(0, 8), min_size=n, max_size=n))) / 8.0
    return scores, labels


def test_hand_case():
    _, auc = roc_auc([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])
    assert auc == 0.75


@given(scored_labels())
@settings(max_examples=150)
def test_trapezoid_matches_mann_whitney(case):
    scores, labels = case
    _, auc = roc_auc(scores, labels)
    assert abs(auc - mann_whitney_auc(scores, labels)) <= 1e-12
    assert abs(auc - pairwise_auc(scores, labels)) <= 1e-12
    assert abs(auc - roc_auc_score(labels, scores)) <= 1e-12


@given(scored_labels())
@settings(max_examples=60)
def test_invariant_under_monotone_transform(case):
    scores, labels = case
    assert roc_auc(np.exp(3 * scores) - 7, labels)[1] == pytest.approx(roc_auc(scores, labels)[1], abs=1e-12)


@given(scored_labels())
@settings(max_examples=60)
def test_label_flip(case):
    scores, labels = case
    assert roc_auc(scores, 1 - labels)[1] == pytest.approx(1 - roc_auc(scores, labels)[1], abs=1e-12)


def test_curve_endpoints_and_monotone():
    curve = roc_curve([0.1, 0.9, 0.5, 0.5, 0.3], [0, 1, 1, 0, 0])
    assert (curve.fpr[0], curve.tpr[0], curve.fpr[-1], curve.tpr[-1]) == (0, 0, 1, 1)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert curve.thresholds[0] == np.inf
    assert trapezoid_auc(curve) == pytest.approx(pairwise_auc(np.array([0.1, 0.9, 0.5, 0.5, 0.3]),
                                                              np.array([0, 1, 1, 0, 0])))


def test_single_class_is_undefined():
    with pytest.raises(UndefinedAUCError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedAUCError):
        mann_whitney_auc([0.1, 0.2], [0, 0])


def test_input_validation():
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1])
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 2])
    with pytest.raises(ValueError):
        accuracy([], [])


def test_accuracy_threshold():
    assert accuracy([0.5, 0.49, 0.9, 0.1], [1, 0, 0, 0]) == 0.75
