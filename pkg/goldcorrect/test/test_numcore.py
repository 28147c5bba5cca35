import math

import numpy as np
import pytest

from goldcorrect.corruption import ProbMatrix, make_uniform
from goldcorrect.errors import InvalidInputError, LabelOutOfRangeError
from goldcorrect.numcore import (
    as_labels,
    corrected_cross_entropy,
    cross_entropy,
    is_probability_vector,
    log_probabilities,
    one_hot,
    soft_cross_entropy,
    softmax,
)


@pytest.mark.parametrize(
    "logits, expected",
    (
        ([0.0, 0.0], [0.5, 0.5]),
        ([1000.0, 0.0], [1.0, 0.0]),
        ([math.log(1), math.log(2), math.log(3)], [1 / 6, 2 / 6, 3 / 6]),
        ([[0.0, 0.0], [math.log(3), 0.0]], [[0.5, 0.5], [0.75, 0.25]]),
    ),
)
def test_softmax(logits, expected):
    np.testing.assert_allclose(softmax(logits), expected, atol=1e-12)


@pytest.mark.parametrize("logits", ([], [0.0, math.nan], [math.inf, 0.0]))
def test_softmax_rejects_bad_logits(logits):
    with pytest.raises(InvalidInputError):
        softmax(logits)


def test_log_probabilities_match_softmax():
    logits = np.array([[2.0, -1.0, 0.5], [0.0, 0.0, 0.0]])

    np.testing.assert_allclose(np.exp(log_probabilities(logits)), softmax(logits))


@pytest.mark.parametrize(
    "probs, label, expected",
    (
        ([1.0, 0.0], 0, 0.0),
        ([0.5, 0.5], 1, math.log(2)),
        ([0.0, 1.0], 0, -math.log(1e-12)),
    ),
)
def test_cross_entropy(probs, label, expected):
    assert cross_entropy(probs, label) == pytest.approx(expected)


def test_cross_entropy_floor_is_finite():
    assert cross_entropy([0.0, 1.0], 0) == pytest.approx(27.631021, abs=1e-6)


@pytest.mark.parametrize("label", (2, -1))
def test_cross_entropy_rejects_out_of_range_labels(label):
    with pytest.raises(LabelOutOfRangeError):
        cross_entropy([0.5, 0.5], label)


@pytest.mark.parametrize("label", (True, 0.0, "0"))
def test_cross_entropy_rejects_non_integer_labels(label):
    with pytest.raises(InvalidInputError):
        cross_entropy([0.5, 0.5], label)


def test_corrected_cross_entropy_with_identity_is_cross_entropy():
    probs = np.array([0.2, 0.5, 0.3])

    for label in range(3):
        assert corrected_cross_entropy(probs, label, ProbMatrix.identity(3)) == cross_entropy(
            probs, label
        )


def test_corrected_cross_entropy_hand_example():
    c_hat = ProbMatrix([[0.8, 0.2], [0.3, 0.7]])

    assert corrected_cross_entropy([0.9, 0.1], 0, c_hat) == pytest.approx(-math.log(0.75))


@pytest.mark.parametrize("k", (2, 3, 10))
def test_corrected_cross_entropy_with_total_corruption_is_log_k(k):
    rng = np.random.default_rng(k)
    c_hat = make_uniform(k, 1.0)
    for _ in range(5):
        probs = softmax(rng.normal(size=k))
        for label in range(k):
            assert corrected_cross_entropy(probs, label, c_hat) == pytest.approx(math.log(k))


def test_corrected_cross_entropy_rejects_mismatched_matrices():
    with pytest.raises(InvalidInputError):
        corrected_cross_entropy([0.5, 0.5], 0, ProbMatrix.identity(3))


def test_soft_cross_entropy():
    assert soft_cross_entropy([0.5, 0.5], [0.3, 0.7]) == pytest.approx(math.log(2))
    assert soft_cross_entropy([0.9, 0.1], [1.0, 0.0]) == pytest.approx(cross_entropy([0.9, 0.1], 0))
    with pytest.raises(InvalidInputError):
        soft_cross_entropy([0.5, 0.5], [1.0, 0.0, 0.0])


def test_one_hot_and_labels():
    np.testing.assert_array_equal(one_hot([2, 0], 3), [[0, 0, 1], [1, 0, 0]])
    np.testing.assert_array_equal(as_labels([1.0, 2.0]), [1, 2])
    with pytest.raises(InvalidInputError):
        as_labels([0.5])
    with pytest.raises(LabelOutOfRangeError):
        as_labels([0, 3], k=3)


@pytest.mark.parametrize(
    "values, expected",
    (
        ([0.5, 0.5], True),
        ([[1.0, 0.0], [0.25, 0.75]], True),
        ([0.6, 0.6], False),
        ([1.5, -0.5], False),
        ([math.nan, 1.0], False),
    ),
)
def test_is_probability_vector(values, expected):
    assert is_probability_vector(values) is expected
