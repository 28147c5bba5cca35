import warnings

import numpy as np
import pytest
from scipy.stats import chisquare

from goldcorrect.corruption import (
    FlipMode,
    ProbMatrix,
    SuperclassPartition,
    corrupt_labels,
    flip_targets,
    frobenius_distance,
    load_matrix,
    make_flip,
    make_hierarchical,
    make_uniform,
    max_abs_distance,
    save_matrix,
    weak_classifier_labels,
)
from goldcorrect.errors import ClippedMatrixWarning, FormatError, InvalidInputError
from goldcorrect.model import Activation, MlpModel, predict
from goldcorrect.numcore import is_probability_vector


def _assert_row_stochastic(matrix):
    assert np.all(matrix.entries >= 0)
    assert np.all(matrix.entries <= 1)
    np.testing.assert_allclose(matrix.entries.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize(
    "k, strength, expected",
    (
        (4, 0.0, np.eye(4)),
        (2, 1.0, [[0.5, 0.5], [0.5, 0.5]]),
        (3, 0.3, [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]),
    ),
)
def test_make_uniform(k, strength, expected):
    np.testing.assert_allclose(make_uniform(k, strength).entries, expected, atol=1e-12)


def test_make_uniform_ten_classes():
    entries = make_uniform(10, 0.7).entries

    np.testing.assert_allclose(np.diag(entries), 0.37)
    np.testing.assert_allclose(entries[~np.eye(10, dtype=bool)], 0.07)


@pytest.mark.parametrize("strength", (-0.1, 1.1, float("nan")))
def test_strength_must_be_in_the_unit_interval(strength):
    with pytest.raises(InvalidInputError):
        make_uniform(3, strength)
    with pytest.raises(InvalidInputError):
        make_flip(3, strength, seed=0)


@pytest.mark.parametrize("k", (1, 0, True, 2.0))
def test_k_must_be_at_least_two(k):
    with pytest.raises(InvalidInputError):
        make_uniform(k, 0.5)


@pytest.mark.parametrize("seed", (0, 1, 2))
def test_flip_with_zero_strength_is_identity(seed):
    assert make_flip(5, 0.0, seed=seed).is_identity()


def test_flip_structure():
    entries = make_flip(10, 0.7, seed=3).entries

    np.testing.assert_allclose(np.diag(entries), 0.3)
    off_diagonal = entries * ~np.eye(10, dtype=bool)
    np.testing.assert_array_equal((off_diagonal > 0).sum(axis=1), np.ones(10))
    np.testing.assert_allclose(off_diagonal.max(axis=1), 0.7)


def test_flip_targets_do_not_depend_on_strength():
    low = make_flip(6, 0.2, seed=8).entries
    high = make_flip(6, 0.9, seed=8).entries
    mask = ~np.eye(6, dtype=bool)

    np.testing.assert_array_equal((low * mask) > 0, (high * mask) > 0)


def test_flip_targets():
    np.testing.assert_array_equal(flip_targets(4, mode=FlipMode.CYCLIC), [1, 2, 3, 0])
    targets = flip_targets(50, seed=1)
    assert np.all(targets != np.arange(50))
    assert np.all((targets >= 0) & (targets < 50))
    with pytest.raises(InvalidInputError):
        flip_targets(4)


def test_cyclic_flip():
    np.testing.assert_allclose(
        make_flip(3, 1.0, mode="cyclic").entries, [[0, 1, 0], [0, 0, 1], [1, 0, 0]]
    )


def test_hierarchical_with_one_group_is_uniform():
    partition = SuperclassPartition([0] * 5)

    np.testing.assert_allclose(
        make_hierarchical(5, 0.6, partition).entries, make_uniform(5, 0.6).entries
    )


def test_hierarchical_hand_example():
    entries = make_hierarchical(4, 0.5, SuperclassPartition.from_groups([[0, 1], [2, 3]])).entries

    np.testing.assert_allclose(entries[0], [0.75, 0.25, 0, 0])
    np.testing.assert_allclose(entries[3], [0, 0, 0.25, 0.75])


@pytest.mark.parametrize("strength", (0.0, 0.5, 1.0))
def test_hierarchical_with_singletons_is_identity(strength):
    assert make_hierarchical(4, strength, SuperclassPartition([0, 1, 2, 3])).is_identity()


def test_hierarchical_rejects_a_partition_of_another_size():
    with pytest.raises(InvalidInputError):
        make_hierarchical(4, 0.5, SuperclassPartition([0, 0, 1]))


@pytest.mark.parametrize(
    "groups",
    ([[0, 1], []], [[0, 1], [1, 2]], [[0, 2]]),
)
def test_partition_from_groups_rejects_bad_groups(groups):
    with pytest.raises(InvalidInputError):
        SuperclassPartition.from_groups(groups)


def test_partitions():
    partition = SuperclassPartition.contiguous(6, 2)

    assert partition.group_of == (0, 0, 1, 1, 2, 2)
    assert partition.groups == ((0, 1), (2, 3), (4, 5))
    assert SuperclassPartition.from_groups([[2, 0], [1]]).group_of == (0, 1, 0)
    with pytest.raises(InvalidInputError):
        SuperclassPartition([0, 2])


@pytest.mark.parametrize(
    "entries",
    (
        [[0.5, 0.5]],
        [[0.5, 0.6], [0.5, 0.5]],
        [[1.1, -0.1], [0.0, 1.0]],
        [[np.nan, 1.0], [0.0, 1.0]],
        np.zeros((0, 0)),
    ),
)
def test_prob_matrix_validation(entries):
    with pytest.raises(InvalidInputError):
        ProbMatrix(entries)


def test_signed_matrices_are_clipped_for_training():
    signed = ProbMatrix([[1.1, -0.1], [0.0, 1.0]], signed=True)

    with pytest.warns(ClippedMatrixWarning):
        clipped = signed.for_training()

    np.testing.assert_allclose(clipped.entries, np.eye(2))
    assert not clipped.signed
    assert len(clipped.notes) == 1


def test_unsigned_matrices_are_used_as_they_are():
    matrix = make_uniform(3, 0.2)

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert matrix.for_training() is matrix


def test_matrix_files(tmp_path):
    path = tmp_path / "c.json"
    matrix = make_flip(4, 0.3, seed=2)

    save_matrix(matrix, path)

    np.testing.assert_array_equal(load_matrix(path).entries, matrix.entries)


def test_matrix_loader_tolerates_small_row_errors():
    loaded = ProbMatrix.from_dict(
        {"version": "goldcorrect-cmat/1", "k": 2, "rows": [[0.5, 0.5000005], [0, 1]]}
    )

    np.testing.assert_allclose(loaded.entries.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize(
    "data",
    (
        {"version": "goldcorrect-cmat/2", "k": 2, "rows": [[1, 0], [0, 1]]},
        {"version": "goldcorrect-cmat/1", "k": 3, "rows": [[1, 0], [0, 1]]},
        {"version": "goldcorrect-cmat/1", "k": 2, "rows": [[0.5, 0.6], [0, 1]]},
        {"version": "goldcorrect-cmat/1", "k": 2, "rows": [[1.5, -0.5], [0, 1]]},
        {"version": "goldcorrect-cmat/1", "rows": [[1, 0], [0, 1]]},
        ["not", "a", "dict"],
    ),
)
def test_matrix_loader_rejects_bad_files(data):
    with pytest.raises(FormatError):
        ProbMatrix.from_dict(data)


def test_matrix_distances():
    first = ProbMatrix.identity(2)
    second = ProbMatrix([[0.5, 0.5], [0.0, 1.0]])

    assert frobenius_distance(first, second) == pytest.approx(np.sqrt(0.5))
    assert max_abs_distance(first, second) == pytest.approx(0.5)


def test_constructors_are_row_stochastic_on_random_cases():
    rng = np.random.default_rng(1234)
    for case in range(1000):
        k = int(rng.integers(2, 12))
        strength = float(rng.random())
        kind = case % 3
        if kind == 0:
            matrix = make_uniform(k, strength)
        elif kind == 1:
            matrix = make_flip(k, strength, seed=case)
        else:
            group_size = int(rng.integers(1, k + 1))
            matrix = make_hierarchical(k, strength, SuperclassPartition.contiguous(k, group_size))
        _assert_row_stochastic(matrix)


def test_corrupt_with_identity_keeps_labels():
    labels = np.arange(10) % 3

    np.testing.assert_array_equal(corrupt_labels(labels, ProbMatrix.identity(3), seed=0), labels)


def test_full_flip_moves_every_label_to_its_target():
    flip = make_flip(5, 1.0, seed=4)
    targets = np.argmax(flip.entries, axis=1)
    labels = np.arange(100) % 5

    np.testing.assert_array_equal(corrupt_labels(labels, flip, seed=1), targets[labels])


def test_corrupt_labels_is_seeded():
    labels = np.arange(1000) % 4
    matrix = make_uniform(4, 0.5)

    np.testing.assert_array_equal(
        corrupt_labels(labels, matrix, seed=3), corrupt_labels(labels, matrix, seed=3)
    )
    assert not np.array_equal(
        corrupt_labels(labels, matrix, seed=3), corrupt_labels(labels, matrix, seed=4)
    )


def test_corrupt_labels_keeps_a_fraction_of_one_minus_m_plus_m_over_k():
    noisy = corrupt_labels(np.zeros(100_000, dtype=int), make_uniform(10, 0.5), seed=0)

    assert np.mean(noisy == 0) == pytest.approx(0.55, abs=0.01)


@pytest.mark.parametrize("kind", ("uniform", "flip", "hierarchical"))
def test_empirical_transitions_match_the_matrix(kind):
    k = 6
    if kind == "uniform":
        matrix = make_uniform(k, 0.6)
    elif kind == "flip":
        matrix = make_flip(k, 0.6, seed=2)
    else:
        matrix = make_hierarchical(k, 0.6, SuperclassPartition.contiguous(k, 3))
    labels = np.repeat(np.arange(k), 100_000)

    noisy = corrupt_labels(labels, matrix, seed=9)

    empirical = np.zeros((k, k))
    np.add.at(empirical, (labels, noisy), 1)
    empirical /= empirical.sum(axis=1, keepdims=True)
    assert np.max(np.abs(empirical - matrix.entries)) < 0.01


def test_weak_labels_at_zero_temperature_are_the_argmax():
    rng = np.random.default_rng(0)
    model = MlpModel.initialize(3, (5,), 4, Activation.RELU, seed=1)
    features = rng.normal(size=(50, 3))

    np.testing.assert_array_equal(
        weak_classifier_labels(model, features, temperature=1e-9), predict(model, features)
    )


def test_weak_labels_of_a_zero_model_are_uniform():
    model = MlpModel.zeros(3, (), 4)
    features = np.ones((10_000, 3))
    rejected = 0
    for seed in range(50):
        labels = weak_classifier_labels(model, features, temperature=5.0, seed=seed)
        rejected += chisquare(np.bincount(labels, minlength=4)).pvalue < 0.01

    # a uniform sampler is rejected at the 1% level about once in 100 runs
    assert rejected <= 3


@pytest.mark.parametrize("temperature", (0.0, -1.0))
def test_weak_labels_need_a_positive_temperature(temperature):
    with pytest.raises(InvalidInputError):
        weak_classifier_labels(MlpModel.zeros(3, (), 4), np.ones((2, 3)), temperature)


def test_prob_matrix_rows_are_distributions():
    assert is_probability_vector(make_flip(7, 0.4, seed=1).entries)
