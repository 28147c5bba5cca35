"""Defines datasets, their loaders and the trusted/untrusted split.

Examples:
    .. code-block:: python

        from goldcorrect.data import generate_gaussian_blobs, load_idx, split_trusted

        train = load_idx("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
        train.n, train.d, train.k       # (60000, 784, 10)

        blobs = generate_gaussian_blobs(k=3, per_class=100, dim=2, separation=10, seed=0)
        split = split_trusted(blobs, trusted_fraction=0.05, seed=1)
        split.trusted.n, split.untrusted.n      # (15, 285)

"""

import csv
import gzip
import hashlib
import io
import logging
import math
import struct
import warnings
from pathlib import Path

import attr
import numpy as np

from goldcorrect.errors import FormatError, InvalidInputError, TrailingBytesWarning
from goldcorrect.numcore import as_dense_matrix, as_labels
from goldcorrect.parser import (
    non_negative_float,
    open_unit_interval_float,
    strictly_positive_int,
)
from goldcorrect.rng import generator

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
_IDX_IMAGES_HEADER = struct.Struct(">IIII")
_IDX_LABELS_HEADER = struct.Struct(">II")


def _frozen(array):
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def _optional_frozen_labels(values):
    if values is None:
        return None
    return _frozen(as_labels(values))


@attr.s(frozen=True, eq=False)
class Dataset:
    """Feature matrix with one class id per row.

    `labels` are the labels a learner sees. When they have been corrupted,
    `clean_labels` keeps the true ones so experiments can measure the actual noise.

    Raises:
        InvalidInputError: if labels do not fit in `k` classes or the number of labels
            differs from the number of feature rows.

    """

    features = attr.ib(converter=lambda values: _frozen(as_dense_matrix(values, "features")))
    labels = attr.ib(converter=lambda values: _frozen(as_labels(values)))
    k = attr.ib(type=int, converter=strictly_positive_int)
    name = attr.ib(type=str, default="dataset")
    clean_labels = attr.ib(default=None, converter=_optional_frozen_labels)

    def __attrs_post_init__(self):
        """Ensure labels and features agree."""
        if self.labels.size != self.features.shape[0]:
            raise InvalidInputError(
                "labels",
                f"{self.labels.size} labels for {self.features.shape[0]} feature rows",
            )
        as_labels(self.labels, self.k)
        if self.clean_labels is not None:
            if self.clean_labels.size != self.labels.size:
                raise InvalidInputError("clean_labels", "must have one entry per row")
            as_labels(self.clean_labels, self.k, what="clean_labels")

    @property
    def n(self):
        """Return the number of examples."""
        return self.features.shape[0]

    @property
    def d(self):
        """Return the number of features."""
        return self.features.shape[1]

    @property
    def true_labels(self):
        """Return the clean labels when known, the labels otherwise."""
        return self.labels if self.clean_labels is None else self.clean_labels

    def take(self, indices, name=None):
        """Return the dataset restricted to `indices`, in that order."""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.k,
            name or self.name,
            None if self.clean_labels is None else self.clean_labels[indices],
        )

    def with_labels(self, labels, name=None):
        """Return a copy whose labels are replaced, keeping the true ones aside."""
        return Dataset(self.features, labels, self.k, name or self.name, self.true_labels)

    def subsample(self, size, seed):
        """Return a seeded random subset of `size` examples (all of them if fewer)."""
        if size >= self.n:
            return self
        indices = np.sort(generator(seed, "subsample").choice(self.n, size, replace=False))
        return self.take(indices, f"{self.name}[{size}]")

    @classmethod
    def concatenate(cls, datasets, name=None):
        """Stack several datasets sharing the same classes."""
        first = datasets[0]
        has_clean = any(d.clean_labels is not None for d in datasets)
        return cls(
            np.concatenate([d.features for d in datasets]),
            np.concatenate([d.labels for d in datasets]),
            first.k,
            name or first.name,
            np.concatenate([d.true_labels for d in datasets]) if has_clean else None,
        )


@attr.s(frozen=True)
class TrustedSplit:
    """Partition of a training set into trusted and untrusted examples.

    Raises:
        InvalidInputError: if the index sets overlap, do not cover the source set or
            one of them is empty.

    """

    trusted = attr.ib(type=Dataset)
    untrusted = attr.ib(type=Dataset)
    trusted_indices = attr.ib(converter=_frozen, eq=False)
    untrusted_indices = attr.ib(converter=_frozen, eq=False)

    def __attrs_post_init__(self):
        """Ensure the split is a partition."""
        if self.trusted.n == 0 or self.untrusted.n == 0:
            raise InvalidInputError("split", "both sides must hold at least one example")
        if self.trusted.k != self.untrusted.k:
            raise InvalidInputError("split", "both sides must have the same classes")
        all_indices = np.concatenate([self.trusted_indices, self.untrusted_indices])
        if np.unique(all_indices).size != all_indices.size:
            raise InvalidInputError("split", "trusted and untrusted indices overlap")
        if all_indices.min() != 0 or all_indices.max() != all_indices.size - 1:
            raise InvalidInputError("split", "indices do not cover the source dataset")

    @property
    def trusted_fraction(self):
        """Return t / (t + u)."""
        return self.trusted.n / (self.trusted.n + self.untrusted.n)

    @property
    def k(self):
        """Return the number of classes."""
        return self.trusted.k

    def with_untrusted_labels(self, labels):
        """Return the split with the untrusted labels replaced (e.g. corrupted)."""
        return attr.evolve(self, untrusted=self.untrusted.with_labels(labels))


def split_trusted(dataset, trusted_fraction, seed, stratified=False):
    """Sample ``round(fraction · N)`` trusted examples; the rest are untrusted.

    Sampling is uniform without replacement. With `stratified`, each class contributes
    ``round(fraction · Nᵢ)`` examples, and at least one when it has two or more.
    Corrupting the untrusted labels is up to the caller.

    Raises:
        InvalidInputError: if the fraction is not in (0, 1) or leaves a side empty.
    """
    trusted_fraction = open_unit_interval_float(trusted_fraction)
    rng = generator(seed, "split-trusted")
    if stratified:
        chosen = []
        for class_id in range(dataset.k):
            members = np.flatnonzero(dataset.labels == class_id)
            if members.size == 0:
                continue
            size = math.floor(trusted_fraction * members.size + 0.5)
            if members.size > 1:
                size = min(max(size, 1), members.size - 1)
            chosen.append(rng.choice(members, size, replace=False))
        trusted_indices = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, int)
    else:
        size = math.floor(trusted_fraction * dataset.n + 0.5)
        if size < 1 or size >= dataset.n:
            raise InvalidInputError(
                "trusted_fraction",
                f"{trusted_fraction} of {dataset.n} examples leaves a side empty",
            )
        trusted_indices = np.sort(rng.choice(dataset.n, size, replace=False))

    mask = np.zeros(dataset.n, dtype=bool)
    mask[trusted_indices] = True
    untrusted_indices = np.flatnonzero(~mask)
    if trusted_indices.size == 0 or untrusted_indices.size == 0:
        raise InvalidInputError(
            "trusted_fraction", f"{trusted_fraction} of {dataset.n} examples leaves a side empty"
        )
    return TrustedSplit(
        dataset.take(trusted_indices, f"{dataset.name}:trusted"),
        dataset.take(untrusted_indices, f"{dataset.name}:untrusted"),
        trusted_indices,
        untrusted_indices,
    )


def _read_bytes(path):
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _check_payload(path, payload, header_size, expected_size):
    available = len(payload) - header_size
    if available < expected_size:
        raise FormatError(
            path,
            f"payload truncated: {expected_size} bytes declared, {available} present",
            offset=len(payload),
        )
    if available > expected_size:
        message = f'"{path}" has {available - expected_size} trailing bytes, ignored'
        warnings.warn(message, TrailingBytesWarning, stacklevel=3)
        log.warning(message)


def _read_idx_images(path):
    payload = _read_bytes(path)
    if len(payload) < _IDX_IMAGES_HEADER.size:
        raise FormatError(path, "header truncated", offset=len(payload))
    magic, count, rows, cols = _IDX_IMAGES_HEADER.unpack_from(payload)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(
            path, f"magic 0x{magic:08x} is not an unsigned-byte image file", offset=0
        )
    _check_payload(path, payload, _IDX_IMAGES_HEADER.size, count * rows * cols)
    pixels = np.frombuffer(
        payload, dtype=np.uint8, count=count * rows * cols, offset=_IDX_IMAGES_HEADER.size
    )
    return pixels.reshape(count, rows, cols)


def _read_idx_labels(path):
    payload = _read_bytes(path)
    if len(payload) < _IDX_LABELS_HEADER.size:
        raise FormatError(path, "header truncated", offset=len(payload))
    magic, count = _IDX_LABELS_HEADER.unpack_from(payload)
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(
            path, f"magic 0x{magic:08x} is not an unsigned-byte label file", offset=0
        )
    _check_payload(path, payload, _IDX_LABELS_HEADER.size, count)
    return np.frombuffer(payload, dtype=np.uint8, count=count, offset=_IDX_LABELS_HEADER.size)


def load_idx(images_path, labels_path, k=None, name=None):
    """Load an IDX image/label file pair, e.g. MNIST.

    Pixels are divided by 255 and each image is flattened row-major. Files ending in
    ``.gz`` are decompressed on the fly. `k` defaults to ``max(label) + 1``.

    Raises:
        FormatError: on a wrong magic number, a truncated payload or a different
            number of images and labels.
    """
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path).astype(np.int64)
    if images.shape[0] != labels.size:
        raise FormatError(
            labels_path,
            f"{labels.size} labels for {images.shape[0]} images",
            offset=4,
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    if k is None:
        k = int(labels.max()) + 1 if labels.size else 1
    log.info("Loaded %d images of %d pixels from %s", labels.size, features.shape[1], images_path)
    return Dataset(features, labels, k, name or Path(images_path).name)


def load_idx_labels(path, k=None):
    """Load a lone IDX label file, e.g. labels written by `write_idx_labels`.

    Raises:
        FormatError: on a wrong magic number or a truncated payload.
    """
    return as_labels(_read_idx_labels(path), k)


def write_idx_labels(labels, path):
    """Write class ids below 256 as an IDX label file."""
    labels = as_labels(labels)
    if labels.size and labels.max() > 255:
        raise InvalidInputError("labels", "IDX label files hold unsigned bytes")
    labels = labels.astype(np.uint8)
    Path(path).write_bytes(
        _IDX_LABELS_HEADER.pack(IDX_LABELS_MAGIC, labels.size) + labels.tobytes()
    )


def write_idx(images, labels, images_path, labels_path):
    """Write unsigned-byte images (N×rows×cols) and labels as an IDX file pair."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3:
        raise InvalidInputError("images", f"expected 3 dimensions, got {images.ndim}")
    if images.dtype != np.uint8 or labels.dtype != np.uint8:
        raise InvalidInputError("images", "images and labels must be uint8 arrays")
    if labels.shape != (images.shape[0],):
        raise InvalidInputError("labels", f"expected {images.shape[0]} labels")
    count, rows, cols = images.shape
    Path(images_path).write_bytes(
        _IDX_IMAGES_HEADER.pack(IDX_IMAGES_MAGIC, count, rows, cols) + images.tobytes()
    )
    write_idx_labels(labels, labels_path)


def load_csv(path, label_column, k=None, name=None):
    """Load a numeric CSV file with a header row.

    The `label_column` holds integer class ids, every other column is a feature.

    Raises:
        FormatError: on bytes that are not UTF-8, an unknown label column, a ragged row
            or a non-numeric cell, naming the row number (the header is row 1).
        InvalidInputError: if the file holds no data row.
    """
    path = Path(path)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(
            path, "not UTF-8 text", offset=e.start, row=raw.count(b"\n", 0, e.start) + 1
        ) from e
    with io.StringIO(text, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(str(path), "file is empty") from None
        if label_column not in header:
            raise FormatError(
                path,
                f'unknown label column "{label_column}", available columns: '
                + ", ".join(header),
                row=1,
            )
        label_index = header.index(label_column)
        features = []
        labels = []
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(
                    path, f"expected {len(header)} cells, got {len(row)}", row=row_number
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError as e:
                raise FormatError(path, f"non-numeric cell: {e}", row=row_number) from e
            label = values.pop(label_index)
            if not label.is_integer() or label < 0:
                raise FormatError(path, f"label {label} is not a class id", row=row_number)
            labels.append(int(label))
            features.append(values)
    if not labels:
        raise InvalidInputError(str(path), "no data row after the header")
    if k is None:
        k = max(labels) + 1
    return Dataset(np.array(features), np.array(labels), k, name or path.stem)


def class_centers(k, dim):
    """Return K unit-norm, well-spread centers in `dim` dimensions.

    With ``dim ≥ K`` the centers are the first K standard basis vectors (pairwise
    distance √2); otherwise they are equally spaced on the unit circle of the first two
    coordinates.
    """
    if dim >= k:
        return np.eye(dim)[:k]
    if dim < 2:
        raise InvalidInputError("dim", f"cannot spread {k} centers in {dim} dimension")
    angles = 2.0 * np.pi * np.arange(k) / k
    centers = np.zeros((k, dim))
    centers[:, 0] = np.cos(angles)
    centers[:, 1] = np.sin(angles)
    return centers


def generate_gaussian_blobs(k, per_class, dim, separation, seed, name=None):
    """Generate K isotropic unit-variance Gaussian blobs.

    Class i is centered at ``separation · vᵢ`` where the vᵢ come from `class_centers`.
    A separation of 0 makes classes indistinguishable; large separations make the label
    a deterministic function of the input for all practical purposes.
    """
    if k < 2:
        raise InvalidInputError("k", f"need at least 2 classes, got {k}")
    per_class = strictly_positive_int(per_class)
    separation = non_negative_float(separation)
    centers = separation * class_centers(k, strictly_positive_int(dim))
    rng = generator(seed, "blobs")
    labels = np.repeat(np.arange(k), per_class)
    features = centers[labels] + rng.standard_normal((labels.size, dim))
    return Dataset(features, labels, k, name or f"blobs-k{k}-sep{separation:g}")


def _sha256(path):
    digest = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dataset_manifest(dataset, source_paths=()):
    """Return the manifest describing `dataset` and the files it came from."""
    return {
        "name": dataset.name,
        "n": dataset.n,
        "d": dataset.d,
        "k": dataset.k,
        "sources": [str(path) for path in source_paths],
        "checksums": {str(path): _sha256(path) for path in source_paths},
    }
