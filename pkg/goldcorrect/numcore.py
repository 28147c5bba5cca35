"""Dense numeric primitives and the losses every model trains with.

Feature and weight matrices are plain 2-D float64 numpy arrays. Probability vectors
are 1-D arrays, or the rows of a 2-D array when a function works on a batch.
"""

import numpy as np
from scipy.special import log_softmax

from goldcorrect.errors import InvalidInputError, LabelOutOfRangeError

LOSS_FLOOR = 1e-12
PROBABILITY_TOLERANCE = 1e-6


def as_dense_matrix(values, what="matrix"):
    """Return `values` as a finite 2-D float64 array."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise InvalidInputError(what, f"expected 2 dimensions, got {matrix.ndim}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError(what, "contains NaN or infinite values")
    return matrix


def as_labels(labels, k=None, what="labels"):
    """Return `labels` as a 1-D int64 array, checking they are valid class ids."""
    array = np.asarray(labels)
    if array.ndim != 1:
        raise InvalidInputError(what, f"expected 1 dimension, got {array.ndim}")
    if array.size and not np.issubdtype(array.dtype, np.integer):
        if not np.all(np.equal(np.mod(array, 1), 0)):
            raise InvalidInputError(what, "class ids must be integers")
    array = array.astype(np.int64)
    if array.size and array.min() < 0:
        raise LabelOutOfRangeError(int(array.min()), k)
    if k is not None and array.size and array.max() >= k:
        raise LabelOutOfRangeError(int(array.max()), k)
    return array


def is_probability_vector(values, tolerance=PROBABILITY_TOLERANCE):
    """Return whether the last axis of `values` holds probability vectors."""
    values = np.asarray(values, dtype=np.float64)
    return bool(
        np.all(np.isfinite(values))
        and np.all(values >= -tolerance)
        and np.all(np.abs(values.sum(axis=-1) - 1) <= tolerance)
    )


def softmax(logits):
    """Compute softmax over the last axis with max-subtraction.

    Raises:
        InvalidInputError: if `logits` is empty or holds NaN/infinite values.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0 or logits.shape[-1] == 0:
        raise InvalidInputError("logits", "must hold at least one value")
    if not np.all(np.isfinite(logits)):
        raise InvalidInputError("logits", "contains NaN or infinite values")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exponentials = np.exp(shifted)
    return exponentials / exponentials.sum(axis=-1, keepdims=True)


def log_probabilities(logits):
    """Compute log-softmax over the last axis."""
    return log_softmax(np.asarray(logits, dtype=np.float64), axis=-1)


def _check_label(label, k):
    if isinstance(label, (bool, np.bool_)) or not isinstance(label, (int, np.integer)):
        raise InvalidInputError("label", f"expected a class id, got {label!r}")
    if not 0 <= label < k:
        raise LabelOutOfRangeError(int(label), k)
    return int(label)


def cross_entropy(probs, label):
    """Return ``-ln(max(probs[label], 1e-12))``.

    Raises:
        LabelOutOfRangeError: if `label` is not a valid index of `probs`.
    """
    probs = np.asarray(probs, dtype=np.float64)
    label = _check_label(label, probs.shape[-1])
    return float(-np.log(max(probs[label], LOSS_FLOOR)))


def corrected_probabilities(probs, c_hat):
    """Push a probability vector through a corruption matrix: ``Ĉᵀ·probs``."""
    matrix = c_hat.entries if hasattr(c_hat, "entries") else np.asarray(c_hat)
    probs = np.asarray(probs, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape != (probs.shape[-1], probs.shape[-1]):
        raise InvalidInputError(
            "c_hat",
            f"expected a {probs.shape[-1]}x{probs.shape[-1]} matrix, "
            f"got shape {matrix.shape}",
        )
    return probs @ matrix


def corrected_cross_entropy(probs, label, c_hat):
    """Return the cross-entropy of ``Ĉᵀ·probs`` against the (noisy) `label`.

    Raises:
        InvalidInputError: on dimension mismatch, or if ``Ĉᵀ·probs`` is not a
            probability vector.
        LabelOutOfRangeError: if `label` is not a valid class id.
    """
    corrected = corrected_probabilities(probs, c_hat)
    if not is_probability_vector(corrected):
        raise InvalidInputError("c_hat", "Ĉᵀ·probs is not a probability vector")
    return cross_entropy(corrected, label)


def soft_cross_entropy(probs, targets):
    """Return ``-Σⱼ tⱼ ln(max(pⱼ, 1e-12))`` for a target probability vector."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape:
        raise InvalidInputError(
            "targets", f"shape {targets.shape} does not match {probs.shape}"
        )
    return float(-np.sum(targets * np.log(np.maximum(probs, LOSS_FLOOR))))


def one_hot(labels, k):
    """Return the N×K one-hot encoding of `labels`."""
    labels = as_labels(labels, k)
    encoded = np.zeros((labels.size, k))
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded
