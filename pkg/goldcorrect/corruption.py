"""Defines corruption matrices and the label corruption processes built on them.

A corruption matrix ``C`` holds ``C[i, j] = p(ỹ = j | y = i)``: row ``i`` is the
distribution of the observed (noisy) label of an example whose true class is ``i``.

Examples:
    .. code-block:: python

        from goldcorrect.corruption import make_flip, make_uniform, corrupt_labels

        c = make_uniform(10, 0.7)
        c.entries[0, 0]     # 0.37
        c.entries[0, 1]     # 0.07

        flip = make_flip(10, 0.7, seed=3)
        noisy = corrupt_labels(labels, flip, seed=4)

"""

import json
import logging
import warnings
from enum import Enum
from pathlib import Path

import attr
import numpy as np

from goldcorrect.errors import (
    ClippedMatrixWarning,
    FormatError,
    InvalidInputError,
)
from goldcorrect.model import predict_logits
from goldcorrect.numcore import as_labels, softmax
from goldcorrect.parser import strictly_positive_float, unit_interval_float
from goldcorrect.rng import generator

log = logging.getLogger(__name__)

MATRIX_FORMAT_VERSION = "goldcorrect-cmat/1"
ROW_SUM_TOLERANCE = 1e-9
LOADER_ROW_SUM_TOLERANCE = 1e-6
WEAK_LABEL_TEMPERATURE = 5.0
ARGMAX_TEMPERATURE = 1e-6

_ENTRY_SLACK = 1e-12


def _frozen_matrix(values):
    matrix = np.array(values, dtype=np.float64, copy=True)
    matrix.setflags(write=False)
    return matrix


@attr.s(frozen=True, eq=False)
class ProbMatrix:
    """Square row-stochastic matrix: the true corruption matrix or an estimate of it.

    `notes` carries warnings raised while the matrix was produced (e.g. a class that
    fell back to the identity). A `signed` matrix still has rows summing to one, but
    its entries may leave [0, 1]; only base-rate refinement produces such matrices and
    `for_training` turns them back into proper distributions.

    Raises:
        InvalidInputError: if the matrix is not square, not finite, has a row that
            does not sum to 1, or (unless `signed`) an entry outside [0, 1].

    """

    entries = attr.ib(converter=_frozen_matrix)
    notes = attr.ib(type=tuple, converter=tuple, default=())
    signed = attr.ib(type=bool, default=False)

    def __attrs_post_init__(self):
        """Ensure the matrix is row-stochastic."""
        entries = self.entries
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidInputError("entries", f"expected a square matrix, got {entries.shape}")
        if entries.shape[0] < 1:
            raise InvalidInputError("entries", "matrix is empty")
        if not np.all(np.isfinite(entries)):
            raise InvalidInputError("entries", "contains NaN or infinite values")
        row_errors = np.abs(entries.sum(axis=1) - 1.0)
        if np.any(row_errors > ROW_SUM_TOLERANCE):
            worst = int(np.argmax(row_errors))
            raise InvalidInputError(
                "entries", f"row {worst} sums to {entries[worst].sum()!r}, not 1"
            )
        if not self.signed:
            if np.any(entries < -_ENTRY_SLACK) or np.any(entries > 1 + _ENTRY_SLACK):
                raise InvalidInputError("entries", "entries must lie in [0, 1]")
            if np.any(entries < 0) or np.any(entries > 1):
                object.__setattr__(self, "entries", _frozen_matrix(np.clip(entries, 0, 1)))

    @property
    def k(self):
        """Return the number of classes."""
        return self.entries.shape[0]

    @classmethod
    def identity(cls, k):
        """Return the K×K identity, i.e. no corruption."""
        return cls(np.eye(k))

    def is_identity(self):
        """Return whether this matrix is exactly the identity."""
        return bool(np.array_equal(self.entries, np.eye(self.k)))

    def for_training(self):
        """Return a matrix that is safe to use in the corrected loss.

        Negative entries are clipped to 0 and the rows renormalized, with a warning.
        Matrices already in [0, 1] are returned as they are.
        """
        if not self.signed:
            return self
        if np.all(self.entries >= 0) and np.all(self.entries <= 1):
            return ProbMatrix(self.entries, notes=self.notes)
        clipped = np.clip(self.entries, 0.0, None)
        clipped = clipped / clipped.sum(axis=1, keepdims=True)
        note = "negative entries were clipped to 0 and rows renormalized"
        warnings.warn(note, ClippedMatrixWarning, stacklevel=2)
        log.warning("Corruption matrix for training: %s", note)
        return ProbMatrix(clipped, notes=(*self.notes, note))

    def to_dict(self):
        """Return the ``goldcorrect-cmat/1`` JSON form of this matrix."""
        data = {
            "version": MATRIX_FORMAT_VERSION,
            "k": self.k,
            "rows": self.entries.tolist(),
        }
        if self.notes:
            data["notes"] = list(self.notes)
        return data

    @classmethod
    def from_dict(cls, data, source="<memory>"):
        """Build a matrix from its JSON form, accepting rows that sum to 1 ± 1e-6.

        Raises:
            FormatError: if the version is unknown, the shape is inconsistent or a row
                is not a probability distribution.
        """
        if not isinstance(data, dict) or data.get("version") != MATRIX_FORMAT_VERSION:
            version = data.get("version") if isinstance(data, dict) else None
            raise FormatError(source, f"unsupported matrix version {version!r}")
        try:
            rows = np.array(data["rows"], dtype=np.float64)
            k = int(data["k"])
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(source, f"malformed matrix: {e}") from e
        if rows.shape != (k, k):
            raise FormatError(source, f"expected {k}x{k} rows, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise FormatError(source, "matrix holds non-finite values")
        if np.any(rows < 0) or np.any(rows > 1):
            raise FormatError(source, "matrix entries must lie in [0, 1]")
        row_sums = rows.sum(axis=1)
        bad_rows = np.flatnonzero(np.abs(row_sums - 1.0) > LOADER_ROW_SUM_TOLERANCE)
        if bad_rows.size:
            raise FormatError(
                source, f"row {int(bad_rows[0])} sums to {row_sums[bad_rows[0]]!r}, not 1"
            )
        return cls(rows / row_sums[:, None], notes=tuple(data.get("notes", ())))


def save_matrix(matrix, path):
    """Write `matrix` to `path` in the ``goldcorrect-cmat/1`` format."""
    Path(path).write_text(json.dumps(matrix.to_dict(), indent=2))


def load_matrix(path):
    """Read a matrix written by `save_matrix`."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(path, f"invalid JSON: {e.msg}", row=e.lineno) from e
    return ProbMatrix.from_dict(data, source=path)


def frobenius_distance(first, second):
    """Return the Frobenius norm of the difference of two matrices."""
    return float(np.linalg.norm(first.entries - second.entries))


def max_abs_distance(first, second):
    """Return the largest absolute entrywise difference of two matrices."""
    return float(np.max(np.abs(first.entries - second.entries)))


def _group_ids(values):
    group_of = tuple(int(value) for value in values)
    if not group_of:
        raise InvalidInputError("group_of", "partition is empty")
    used = sorted(set(group_of))
    if used != list(range(len(used))):
        raise InvalidInputError(
            "group_of", f"group ids must be 0..G-1 with no gap, got {used}"
        )
    return group_of


@attr.s(frozen=True)
class SuperclassPartition:
    """Partition of the K classes into groups of semantically similar classes.

    ``group_of[i]`` is the group of class ``i``. Group ids run from 0 to G-1 and every
    one of them is used, so no group is empty.
    """

    group_of = attr.ib(type=tuple, converter=_group_ids)

    @property
    def k(self):
        """Return the number of classes covered."""
        return len(self.group_of)

    @property
    def groups(self):
        """Return the classes of each group, as a tuple of tuples."""
        members = {}
        for class_id, group in enumerate(self.group_of):
            members.setdefault(group, []).append(class_id)
        return tuple(tuple(members[group]) for group in sorted(members))

    @classmethod
    def from_groups(cls, groups):
        """Build a partition from explicit groups, e.g. ``[[0, 1], [2, 3]]``.

        Raises:
            InvalidInputError: if a class is missing, repeated or a group is empty.
        """
        group_of = {}
        for group, members in enumerate(groups):
            if not members:
                raise InvalidInputError("groups", f"group {group} is empty")
            for class_id in members:
                if class_id in group_of:
                    raise InvalidInputError("groups", f"class {class_id} appears twice")
                group_of[int(class_id)] = group
        k = len(group_of)
        if sorted(group_of) != list(range(k)):
            raise InvalidInputError("groups", f"classes must be exactly 0..{k - 1}")
        return cls([group_of[class_id] for class_id in range(k)])

    @classmethod
    def contiguous(cls, k, group_size):
        """Group classes ``0..group_size-1``, then the next `group_size`, and so on."""
        return cls([class_id // group_size for class_id in range(k)])


class FlipMode(Enum):
    """How a flip corruption picks the off-diagonal class of each row."""

    RANDOM = "random"
    CYCLIC = "cyclic"


def _check_k(k):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 2:
        raise InvalidInputError("k", f"need at least 2 classes, got {k!r}")
    return int(k)


def make_uniform(k, strength):
    """Return ``(1 - m)·I + m·11ᵀ/K``.

    Raises:
        InvalidInputError: if ``k < 2`` or `strength` is outside [0, 1].
    """
    k = _check_k(k)
    strength = unit_interval_float(strength)
    return ProbMatrix((1.0 - strength) * np.eye(k) + strength * np.full((k, k), 1.0 / k))


def flip_targets(k, seed=None, mode=FlipMode.RANDOM):
    """Return the off-diagonal class each row flips to.

    Random targets are drawn uniformly among the K-1 other classes from `seed`, and do
    not depend on the corruption strength. Cyclic targets send class i to i+1 mod K.
    """
    k = _check_k(k)
    mode = FlipMode(mode)
    if mode is FlipMode.CYCLIC:
        return np.array([(row + 1) % k for row in range(k)])
    if seed is None:
        raise InvalidInputError("seed", "random flip targets need a seed")
    draws = generator(seed, "flip", k).integers(0, k - 1, size=k)
    rows = np.arange(k)
    return np.where(draws >= rows, draws + 1, draws)


def make_flip(k, strength, seed=None, mode=FlipMode.RANDOM):
    """Return a flip corruption: mass ``1 - m`` on the diagonal, ``m`` on one other class.

    Raises:
        InvalidInputError: if ``k < 2``, `strength` is outside [0, 1], or a random
            flip is requested without a seed.
    """
    strength = unit_interval_float(strength)
    targets = flip_targets(k, seed, mode)
    k = len(targets)
    entries = (1.0 - strength) * np.eye(k)
    entries[np.arange(k), targets] = strength
    return ProbMatrix(entries)


def make_hierarchical(k, strength, partition):
    """Return a uniform corruption restricted to each class's superclass group.

    Row i is ``(1 - m)·eᵢ + m·u`` where ``u`` is uniform over the group of class i,
    class i included. Classes alone in their group keep an identity row.

    Raises:
        InvalidInputError: if the partition does not cover exactly `k` classes or
            `strength` is outside [0, 1].
    """
    k = _check_k(k)
    strength = unit_interval_float(strength)
    if partition.k != k:
        raise InvalidInputError(
            "partition", f"covers {partition.k} classes, expected {k}"
        )
    entries = (1.0 - strength) * np.eye(k)
    for members in partition.groups:
        members = np.array(members)
        entries[np.ix_(members, members)] += strength / members.size
    return ProbMatrix(entries)


def sample_categorical(probabilities, rng):
    """Draw one class per row of `probabilities` with inverse-CDF sampling."""
    cumulative = np.cumsum(probabilities, axis=1)
    uniforms = rng.random(probabilities.shape[0])
    draws = np.sum(cumulative <= uniforms[:, None], axis=1)
    return np.minimum(draws, probabilities.shape[1] - 1).astype(np.int64)


def corrupt_labels(labels, c, seed):
    """Replace each label ``y`` by a draw from row ``y`` of `c`.

    Draws are independent per example and fully determined by `seed`.
    """
    labels = as_labels(labels, c.k)
    if labels.size == 0:
        return labels.copy()
    rng = generator(seed, "corrupt")
    return sample_categorical(c.entries[labels], rng)


def weak_classifier_labels(model, features, temperature=WEAK_LABEL_TEMPERATURE, seed=0):
    """Sample one label per example from ``softmax(logits / temperature)``.

    Temperatures below 1e-6 are treated as the zero limit, i.e. the model's argmax.

    Raises:
        InvalidInputError: if `temperature` is not strictly positive.
    """
    temperature = strictly_positive_float(temperature)
    logits = predict_logits(model, features)
    if temperature < ARGMAX_TEMPERATURE:
        return np.argmax(logits, axis=1).astype(np.int64)
    rng = generator(seed, "weak-labels")
    return sample_categorical(softmax(logits / temperature), rng)
