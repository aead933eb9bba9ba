"""Metrics: brute-force oracle agreement, undefined-class handling, and
aggregate invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference as ref
from dmanet import IGNORE_ID, ConfusionMatrix, ShapeError


def _random_pair(rng, num_classes=4, shape=(4, 4), ignore_fraction=0.2):
    prediction = rng.integers(0, num_classes, size=shape)
    reference = rng.integers(0, num_classes, size=shape)
    reference = np.where(rng.uniform(size=shape) < ignore_fraction,
                         IGNORE_ID, reference)
    return prediction, reference


def test_matches_double_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        prediction, reference = _random_pair(rng)
        matrix = ConfusionMatrix(4)
        matrix.update(prediction, reference)
        expected = ref.confusion_ref(prediction, reference, 4)
        assert (matrix.matrix == expected).all()
        got_iou = matrix.iou_per_class()
        want_iou = ref.iou_ref(expected)
        both_nan = np.isnan(got_iou) & np.isnan(want_iou)
        assert (both_nan | (got_iou == want_iou)).all()


def test_perfect_prediction_scores_one():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 5, size=(16, 16))
    matrix = ConfusionMatrix(5)
    matrix.update(labels, labels)
    assert matrix.mean_iou() == 1.0
    assert matrix.pixel_accuracy() == 1.0


def test_absent_class_is_undefined_not_zero():
    matrix = ConfusionMatrix(3)
    matrix.update(np.array([0, 1, 1]), np.array([0, 1, 0]))
    per_class = matrix.iou_per_class()
    assert np.isnan(per_class[2])
    assert not np.isnan(per_class[0]) and not np.isnan(per_class[1])
    # the undefined class does not drag the mean down
    np.testing.assert_allclose(matrix.mean_iou(),
                               np.nanmean(per_class))


def test_empty_matrix_reports_nan():
    matrix = ConfusionMatrix(3)
    assert np.isnan(matrix.pixel_accuracy())
    assert np.isnan(matrix.mean_iou())
    assert np.isnan(matrix.iou_per_class()).all()


def test_ignored_pixels_never_counted():
    matrix = ConfusionMatrix(2)
    matrix.update(np.array([0, 1, 0]), np.array([IGNORE_ID, IGNORE_ID, 0]))
    assert matrix.matrix.sum() == 1
    assert matrix.matrix[0, 0] == 1


def test_update_accumulates_and_reset_clears():
    rng = np.random.default_rng(2)
    matrix = ConfusionMatrix(4)
    a_pred, a_ref = _random_pair(rng)
    b_pred, b_ref = _random_pair(rng)
    matrix.update(a_pred, a_ref)
    matrix.update(b_pred, b_ref)
    expected = ref.confusion_ref(a_pred, a_ref, 4) + ref.confusion_ref(b_pred, b_ref, 4)
    assert (matrix.matrix == expected).all()
    matrix.reset()
    assert matrix.matrix.sum() == 0


def test_merge_combines_shards():
    rng = np.random.default_rng(3)
    whole = ConfusionMatrix(4)
    shard_a, shard_b = ConfusionMatrix(4), ConfusionMatrix(4)
    for shard in (shard_a, shard_b):
        prediction, reference = _random_pair(rng)
        shard.update(prediction, reference)
        whole.update(prediction, reference)
    shard_a.merge(shard_b)
    assert (shard_a.matrix == whole.matrix).all()
    with pytest.raises(ValueError, match="merge"):
        shard_a.merge(ConfusionMatrix(5))


def test_validation_errors():
    matrix = ConfusionMatrix(3)
    with pytest.raises(ShapeError, match="shapes differ"):
        matrix.update(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError, match="prediction contains class id 5"):
        matrix.update(np.array([5]), np.array([0]))
    with pytest.raises(ValueError, match="reference contains class id 3"):
        matrix.update(np.array([0]), np.array([3]))
    with pytest.raises(ValueError, match="num_classes"):
        ConfusionMatrix(1)


def test_report_formatting():
    matrix = ConfusionMatrix(3)
    matrix.update(np.array([0, 0, 1]), np.array([0, 1, 1]))
    text = matrix.report(["road", "car", "sky"])
    assert "road" in text and "car" in text and "sky" in text
    assert "---" in text  # the absent class renders as undefined
    assert "mean IoU" in text and "pixel accuracy" in text
    with pytest.raises(ValueError, match="class names"):
        matrix.report(["just-one"])


@settings(deadline=None, max_examples=50)
@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 6))
def test_property_counts_and_bounds(seed, num_classes):
    rng = np.random.default_rng(seed)
    prediction, reference = _random_pair(rng, num_classes=num_classes,
                                         shape=(5, 5))
    matrix = ConfusionMatrix(num_classes)
    matrix.update(prediction, reference)
    assert matrix.matrix.sum() == (reference != IGNORE_ID).sum()
    if matrix.matrix.sum():
        assert 0.0 <= matrix.pixel_accuracy() <= 1.0
        per_class = matrix.iou_per_class()
        defined = per_class[~np.isnan(per_class)]
        assert ((defined >= 0) & (defined <= 1)).all()
