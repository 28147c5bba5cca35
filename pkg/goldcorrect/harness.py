"""Sweeps every method over corruption strengths and trusted fractions.

A sweep is the grid ``methods × fractions × strengths × seeds``. Every cell is a pure
function of the sweep config and of seeds derived from its coordinates, so cells can
run in any order, in parallel, and be resumed from the per-cell JSON files written
under ``<out>/cells/``.

Examples:
    .. code-block:: python

        from goldcorrect.harness import SweepConfig, auec, run_sweep

        auec([10.0] * 11)       # 10.0

        config = SweepConfig.from_dict({"methods": ["glc", "no_correction"], "seeds": [0]})
        report = run_sweep(config)
        for summary in report.curves():
            print(summary.method, summary.fraction, summary.auec)

"""

import functools
import hashlib
import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor, as_completed
from enum import Enum
from pathlib import Path

import attr
import numpy as np
from scipy.integrate import trapezoid

from goldcorrect.corruption import (
    FlipMode,
    SuperclassPartition,
    corrupt_labels,
    make_flip,
    make_hierarchical,
    make_uniform,
)
from goldcorrect.data import (
    generate_gaussian_blobs,
    load_csv,
    load_idx,
    split_trusted,
)
from goldcorrect.errors import FormatError, GoldCorrectError, InvalidInputError
from goldcorrect.model import ModelTemplate
from goldcorrect.numcore import as_labels
from goldcorrect.optim import TrainConfig
from goldcorrect.parser import (
    non_negative_float,
    open_unit_interval_float,
    positive_int,
    seed_int,
    strictly_positive_int,
)
from goldcorrect.rng import derive_seed
from goldcorrect.training import (
    MethodKind,
    MethodSpec,
    RunOptions,
    evaluate,
    run_method,
)

log = logging.getLogger(__name__)

STRENGTHS = tuple(i / 10 for i in range(11))
REPORT_FORMAT_VERSION = "goldcorrect-report/1"
CELL_FORMAT_VERSION = "goldcorrect-cell/1"
QUICK_SUBSAMPLE = 10000
QUICK_EPOCHS = 5


def auec(errors):
    """Return the area under an error curve sampled at `STRENGTHS`.

    The curve is linearly interpolated between the 11 points and integrated over the
    unit domain with the trapezoidal rule, so the result is a percentage.

    Raises:
        InvalidInputError: if `errors` does not hold 11 finite values.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.shape != (len(STRENGTHS),):
        raise InvalidInputError(
            "errors", f"expected {len(STRENGTHS)} values, got {errors.size}"
        )
    if not np.all(np.isfinite(errors)):
        raise InvalidInputError("errors", "all values must be finite")
    return float(trapezoid(errors, STRENGTHS))


def _error_values(values):
    values = tuple(float(value) for value in values)
    if len(values) != len(STRENGTHS):
        raise InvalidInputError("errors", f"expected {len(STRENGTHS)} values")
    if not all(0.0 <= value <= 100.0 for value in values):
        raise InvalidInputError("errors", "percent errors must lie in [0, 100]")
    return values


@attr.s(frozen=True)
class ErrorCurve:
    """Test errors at the 11 corruption strengths, in percent."""

    errors = attr.ib(type=tuple, converter=_error_values)

    @property
    def strengths(self):
        """Return the fixed strength grid."""
        return STRENGTHS

    @property
    def auec(self):
        """Return the area under this curve."""
        return auec(self.errors)


def strength_index(strength):
    """Return the index of `strength` in `STRENGTHS`.

    Raises:
        InvalidInputError: if `strength` is not on the grid.
    """
    for index, value in enumerate(STRENGTHS):
        if math.isclose(strength, value, abs_tol=1e-9):
            return index
    raise InvalidInputError("strength", f"{strength} is not one of {list(STRENGTHS)}")


class CorruptionKind(Enum):
    """Corruption families a sweep can run."""

    UNIFORM = "uniform"
    FLIP = "flip"
    HIERARCHICAL = "hierarchical"


def _optional(converter):
    return lambda value: None if value is None else converter(value)


def _groups(value):
    return None if value is None else tuple(int(group) for group in value)


@attr.s(frozen=True)
class CorruptionSpec:
    """Corruption family of a sweep and its fixed parameters.

    Flip targets come from `seed` (or from the sweep's run seed when unset) and stay
    the same for every strength. Hierarchical corruptions group classes either by an
    explicit `groups` list (one superclass id per class) or in contiguous runs of
    `group_size` classes.
    """

    kind = attr.ib(type=CorruptionKind, converter=CorruptionKind, default=CorruptionKind.FLIP)
    flip_mode = attr.ib(type=FlipMode, converter=FlipMode, default=FlipMode.RANDOM)
    group_size = attr.ib(converter=_optional(strictly_positive_int), default=None)
    groups = attr.ib(converter=_groups, default=None)
    seed = attr.ib(converter=_optional(seed_int), default=None)

    def __attrs_post_init__(self):
        """Ensure hierarchical corruptions know their superclasses."""
        if self.kind is CorruptionKind.HIERARCHICAL and (self.group_size is None) == (
            self.groups is None
        ):
            raise InvalidInputError(
                "corruption", "hierarchical needs exactly one of group_size or groups"
            )

    def partition(self, k):
        """Return the superclass partition for `k` classes."""
        if self.groups is not None:
            return SuperclassPartition(self.groups)
        return SuperclassPartition.contiguous(k, self.group_size)

    def matrix(self, k, strength, run_seed):
        """Return the corruption matrix at `strength` for `k` classes."""
        if self.kind is CorruptionKind.UNIFORM:
            return make_uniform(k, strength)
        if self.kind is CorruptionKind.FLIP:
            seed = self.seed if self.seed is not None else derive_seed(run_seed, "flip")
            return make_flip(k, strength, seed, self.flip_mode)
        return make_hierarchical(k, strength, self.partition(k))

    def to_dict(self):
        """Return the JSON form of this spec."""
        return {
            "kind": self.kind.value,
            "flip_mode": self.flip_mode.value,
            "group_size": self.group_size,
            "groups": None if self.groups is None else list(self.groups),
            "seed": self.seed,
        }


class DatasetKind(Enum):
    """Where a sweep's training and test data come from."""

    BLOBS = "blobs"
    IDX = "idx"
    CSV = "csv"


@attr.s(frozen=True)
class DatasetRef:
    """Recipe for the training and test datasets of a sweep.

    ``blobs`` generates both sets from the run seed; ``idx`` reads four IDX files;
    ``csv`` reads a training and a test CSV file sharing `label_column`. `subsample`
    trains on a seeded random subset of the training set.
    """

    kind = attr.ib(type=DatasetKind, converter=DatasetKind, default=DatasetKind.BLOBS)
    k = attr.ib(converter=_optional(int), default=None)
    per_class = attr.ib(type=int, converter=strictly_positive_int, default=200)
    test_per_class = attr.ib(type=int, converter=strictly_positive_int, default=100)
    dim = attr.ib(type=int, converter=strictly_positive_int, default=10)
    separation = attr.ib(type=float, converter=non_negative_float, default=4.0)
    train_images = attr.ib(default=None)
    train_labels = attr.ib(default=None)
    test_images = attr.ib(default=None)
    test_labels = attr.ib(default=None)
    train_path = attr.ib(default=None)
    test_path = attr.ib(default=None)
    label_column = attr.ib(default="label")
    subsample = attr.ib(converter=_optional(strictly_positive_int), default=None)

    def __attrs_post_init__(self):
        """Ensure the fields the kind needs are there."""
        required = {
            DatasetKind.BLOBS: ("k",),
            DatasetKind.IDX: ("train_images", "train_labels", "test_images", "test_labels"),
            DatasetKind.CSV: ("train_path", "test_path"),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise InvalidInputError(
                "dataset", f'"{self.kind.value}" needs {", ".join(missing)}'
            )

    def source_paths(self):
        """Return the files this dataset is read from."""
        if self.kind is DatasetKind.IDX:
            return [self.train_images, self.train_labels, self.test_images, self.test_labels]
        if self.kind is DatasetKind.CSV:
            return [self.train_path, self.test_path]
        return []

    def load(self, run_seed):
        """Return the ``(train, test)`` datasets.

        Raises:
            FormatError: if a file cannot be parsed.
            InvalidInputError: if the two sets disagree on the number of features.
        """
        if self.kind is DatasetKind.BLOBS:
            train = generate_gaussian_blobs(
                self.k,
                self.per_class,
                self.dim,
                self.separation,
                derive_seed(run_seed, "blobs-train"),
                name="train",
            )
            test = generate_gaussian_blobs(
                self.k,
                self.test_per_class,
                self.dim,
                self.separation,
                derive_seed(run_seed, "blobs-test"),
                name="test",
            )
        elif self.kind is DatasetKind.IDX:
            train = load_idx(self.train_images, self.train_labels, self.k, name="train")
            test = load_idx(self.test_images, self.test_labels, train.k, name="test")
        else:
            train = load_csv(self.train_path, self.label_column, self.k, name="train")
            test = load_csv(self.test_path, self.label_column, train.k, name="test")
        if train.d != test.d:
            raise InvalidInputError(
                "dataset", f"train has {train.d} features, test has {test.d}"
            )
        if self.subsample is not None:
            train = train.subsample(self.subsample, derive_seed(run_seed, "subsample"))
        return train, test

    def to_dict(self):
        """Return the JSON form of this reference."""
        data = attr.asdict(self)
        data["kind"] = self.kind.value
        return data


@functools.lru_cache(maxsize=4)
def _load_datasets(dataset, run_seed):
    log.info("Loading %s dataset", dataset.kind.value)
    return dataset.load(run_seed)


def _fractions(values):
    values = tuple(open_unit_interval_float(value) for value in values)
    if not values:
        raise InvalidInputError("fractions", "must not be empty")
    return values


def _methods(values):
    values = tuple(
        value if isinstance(value, MethodSpec) else MethodSpec.from_dict(value)
        for value in values
    )
    if not values:
        raise InvalidInputError("methods", "must not be empty")
    names = [value.name for value in values]
    if len(set(names)) != len(names):
        raise InvalidInputError("methods", "must not repeat a method")
    return values


def _seeds(values):
    values = tuple(seed_int(value) for value in values)
    if not values:
        raise InvalidInputError("seeds", "must not be empty")
    if len(set(values)) != len(values):
        raise InvalidInputError("seeds", "must not repeat a seed")
    return values


def _convert(cls):
    return lambda value: value if isinstance(value, cls) else cls(**value)


DEFAULT_METHODS = (
    "glc",
    "forward",
    "forward_gold",
    "confusion",
    "distillation",
    "no_correction",
    "trusted_only",
)


@attr.s(frozen=True)
class SweepConfig:
    """Everything a sweep needs, loadable from one JSON file.

    `seed` is the run seed every cell derives its seeds from; `seeds` are the repeats
    averaged in each curve. `jobs` of 0 uses every available core.
    """

    dataset = attr.ib(
        type=DatasetRef, converter=_convert(DatasetRef), factory=lambda: DatasetRef(k=5)
    )
    corruption = attr.ib(
        type=CorruptionSpec, converter=_convert(CorruptionSpec), factory=CorruptionSpec
    )
    fractions = attr.ib(type=tuple, converter=_fractions, default=(0.05, 0.1, 0.25))
    methods = attr.ib(type=tuple, converter=_methods, default=DEFAULT_METHODS)
    seeds = attr.ib(type=tuple, converter=_seeds, default=(0, 1, 2))
    train = attr.ib(type=TrainConfig, converter=_convert(TrainConfig), factory=TrainConfig)
    model = attr.ib(
        type=ModelTemplate, converter=_convert(ModelTemplate), factory=ModelTemplate
    )
    options = attr.ib(type=RunOptions, converter=_convert(RunOptions), factory=RunOptions)
    stratified = attr.ib(type=bool, default=False)
    seed = attr.ib(type=int, converter=seed_int, default=0)
    jobs = attr.ib(type=int, converter=positive_int, default=0)
    out = attr.ib(type=str, converter=str, default="goldcorrect-out")

    @classmethod
    def from_dict(cls, data):
        """Build a config from its JSON form; missing keys keep their defaults."""
        try:
            return cls(**data)
        except GoldCorrectError:
            raise
        except (TypeError, ValueError) as e:
            raise InvalidInputError("config", str(e)) from e

    def to_dict(self):
        """Return the JSON form of this config."""
        return {
            "dataset": self.dataset.to_dict(),
            "corruption": self.corruption.to_dict(),
            "fractions": list(self.fractions),
            "methods": [method.to_dict() for method in self.methods],
            "seeds": list(self.seeds),
            "train": self.train.to_dict(),
            "model": self.model.to_dict(),
            "options": self.options.to_dict(),
            "stratified": self.stratified,
            "seed": self.seed,
            "jobs": self.jobs,
            "out": self.out,
        }

    def fingerprint(self):
        """Return a digest of every setting the result of a cell depends on.

        Methods, fractions and seeds only pick cells, and `jobs` and `out` do not change
        results, so they are left out.
        """
        data = self.to_dict()
        for key in ("methods", "fractions", "seeds", "jobs", "out"):
            del data[key]
        encoded = json.dumps(data, sort_keys=True).encode("utf-8")
        return hashlib.blake2b(encoded, digest_size=16).hexdigest()

    def quick(self):
        """Return the quick preset: 10,000 training examples and 5 epochs."""
        subsample = QUICK_SUBSAMPLE
        if self.dataset.subsample is not None:
            subsample = min(subsample, self.dataset.subsample)
        return attr.evolve(
            self,
            dataset=attr.evolve(self.dataset, subsample=subsample),
            train=attr.evolve(self.train, epochs=min(self.train.epochs, QUICK_EPOCHS)),
        )

    def cells(self):
        """Return every cell of the sweep, in report order."""
        return [
            Cell(method, fraction, strength_index, repeat)
            for method in self.methods
            for fraction in self.fractions
            for strength_index in range(len(STRENGTHS))
            for repeat in self.seeds
        ]


@attr.s(frozen=True)
class Cell:
    """One training run of the sweep grid."""

    method = attr.ib(type=MethodSpec)
    fraction = attr.ib(type=float)
    strength_index = attr.ib(type=int)
    repeat = attr.ib(type=int)

    @property
    def strength(self):
        """Return the corruption strength of this cell."""
        return STRENGTHS[self.strength_index]

    @property
    def cell_id(self):
        """Return a file-name-safe identifier unique within a sweep."""
        raw = (
            f"{self.method.name}__f{self.fraction:g}"
            f"__s{self.strength_index:02d}__r{self.repeat}"
        )
        return re.sub(r"[^A-Za-z0-9._=-]", "_", raw)

    def data_seed(self, run_seed):
        """Return the seed of the split and corruption, shared by every method."""
        return derive_seed(run_seed, "data", self.fraction, self.strength_index, self.repeat)

    def train_seed(self, run_seed):
        """Return the seed of the method's trainings."""
        return derive_seed(
            run_seed, self.method.name, self.fraction, self.strength_index, self.repeat
        )


def execute_cell(config, cell, noisy_labels=None):
    """Train and evaluate the method of one cell.

    The untrusted labels are corrupted with the sweep's corruption at the cell's
    strength, unless `noisy_labels` (one label per training example, e.g. written by
    ``goldcorrect corrupt``) are given.

    Returns:
        tuple: the `MethodResult` and the percent test error.

    """
    train_set, test_set = _load_datasets(config.dataset, config.seed)
    data_seed = cell.data_seed(config.seed)
    split = split_trusted(
        train_set, cell.fraction, derive_seed(data_seed, "split"), config.stratified
    )
    c_true = config.corruption.matrix(train_set.k, cell.strength, config.seed)
    if noisy_labels is None:
        corrupt_seed = derive_seed(data_seed, "corrupt")
        noisy = corrupt_labels(split.untrusted.labels, c_true, corrupt_seed)
    else:
        if config.dataset.subsample is not None:
            raise InvalidInputError("noisy_labels", "cannot be used with a subsampled dataset")
        noisy_labels = as_labels(noisy_labels, train_set.k, "noisy_labels")
        if noisy_labels.size != train_set.n:
            raise InvalidInputError(
                "noisy_labels", f"{noisy_labels.size} labels for {train_set.n} examples"
            )
        noisy = noisy_labels[split.untrusted_indices]
    split = split.with_untrusted_labels(noisy)
    result = run_method(
        cell.method,
        split,
        config.model,
        config.train.with_seed(cell.train_seed(config.seed)),
        c_true=c_true if cell.method.kind is MethodKind.TRUE_MATRIX_ORACLE else None,
        options=config.options,
    )
    return result, evaluate(result.model, test_set)


def run_cell(config, cell):
    """Run one cell and return its JSON record.

    Any error raised while the cell runs is caught and recorded with
    ``"status": "failed"``, so one broken cell never stops a sweep.
    """
    record = {
        "format": CELL_FORMAT_VERSION,
        "id": cell.cell_id,
        "method": cell.method.to_dict(),
        "method_name": cell.method.name,
        "corruption": config.corruption.kind.value,
        "fraction": cell.fraction,
        "strength_index": cell.strength_index,
        "strength": cell.strength,
        "repeat": cell.repeat,
        "config_fingerprint": config.fingerprint(),
    }
    try:
        result, percent_error = execute_cell(config, cell)
    except Exception as e:
        if isinstance(e, GoldCorrectError):
            log.error("Cell %s failed: %s", cell.cell_id, e)
        else:
            log.exception("Cell %s failed unexpectedly", cell.cell_id)
        record.update(status="failed", error={"type": type(e).__name__, "message": str(e)})
        return record
    log.info("Cell %s: %.2f%% error", cell.cell_id, percent_error)
    record.update(
        status="ok", percent_error=percent_error, metadata=result.metadata(percent_error)
    )
    return record


def _cell_path(out, cell):
    return Path(out) / "cells" / f"{cell.cell_id}.json"


def _write_json(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".partial")
    partial.write_text(json.dumps(data, indent=2, sort_keys=True))
    os.replace(partial, path)


def _read_cell(path, cell, fingerprint):
    try:
        record = json.loads(path.read_text())
    except (OSError, ValueError):
        log.warning("Ignoring unreadable cell file %s", path)
        return None
    if record.get("format") != CELL_FORMAT_VERSION or record.get("id") != cell.cell_id:
        log.warning("Ignoring stale cell file %s", path)
        return None
    if record.get("config_fingerprint") != fingerprint:
        log.warning("Ignoring %s, computed with another configuration", path)
        return None
    return record


def run_sweep(config, resume=True):
    """Run every cell of `config` and return the sweep report.

    Completed cells are written to ``<out>/cells/<id>.json`` as soon as they finish.
    With `resume`, cells whose file already exists are read back instead of recomputed;
    failed cells are never written, so they are retried.
    """
    cells = config.cells()
    records = {}
    pending = []
    fingerprint = config.fingerprint()
    for cell in cells:
        path = _cell_path(config.out, cell)
        record = _read_cell(path, cell, fingerprint) if resume and path.exists() else None
        if record is None:
            pending.append(cell)
        else:
            log.info("Resuming: %s already done", cell.cell_id)
            records[cell.cell_id] = record
    log.info("Sweep: %d cells, %d to run", len(cells), len(pending))

    jobs = config.jobs or os.cpu_count() or 1
    if jobs == 1 or len(pending) <= 1:
        results = (run_cell(config, cell) for cell in pending)
        for cell, record in zip(pending, results):
            _store(config, cell, record, records)
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(pending))) as pool:
            futures = {pool.submit(run_cell, config, cell): cell for cell in pending}
            for future in as_completed(futures):
                _store(config, futures[future], future.result(), records)

    report = SweepReport(
        config.to_dict(),
        tuple(records[cell.cell_id] for cell in cells),
        computed=tuple(cell.cell_id for cell in pending),
    )
    save_report(report, Path(config.out) / "report.json")
    return report


def _store(config, cell, record, records):
    records[cell.cell_id] = record
    if record["status"] == "ok":
        _write_json(_cell_path(config.out, cell), record)


@attr.s(frozen=True)
class CurveSummary:
    """Per-strength mean, min and max error of one method over the seeds.

    Strengths without a successful cell hold None; such a curve has no area.
    """

    corruption = attr.ib(type=str)
    fraction = attr.ib(type=float)
    method = attr.ib(type=str)
    means = attr.ib(type=tuple)
    minimums = attr.ib(type=tuple)
    maximums = attr.ib(type=tuple)
    repeats = attr.ib(type=tuple)

    @property
    def complete(self):
        """Return whether every strength has at least one result."""
        return all(mean is not None for mean in self.means)

    @property
    def curve(self):
        """Return the mean ErrorCurve, or None when the curve has gaps."""
        return ErrorCurve(self.means) if self.complete else None

    @property
    def auec(self):
        """Return the area under the mean curve, or None when it has gaps."""
        return auec(self.means) if self.complete else None


@attr.s(frozen=True, eq=False)
class SweepReport:
    """All cell records of a sweep, in grid order."""

    config = attr.ib(type=dict)
    cells = attr.ib(type=tuple, converter=tuple)
    computed = attr.ib(type=tuple, converter=tuple, default=())

    @property
    def failures(self):
        """Return the records of the failed cells."""
        return [cell for cell in self.cells if cell["status"] != "ok"]

    def curves(self):
        """Return one CurveSummary per (corruption, fraction, method), in grid order."""
        groups = {}
        for record in self.cells:
            key = (record["corruption"], record["fraction"], record["method_name"])
            groups.setdefault(key, {"repeats": set(), "errors": {}})
            group = groups[key]
            group["repeats"].add(record["repeat"])
            if record["status"] == "ok":
                group["errors"].setdefault(record["strength_index"], []).append(
                    record["percent_error"]
                )
        summaries = []
        for (corruption, fraction, method), group in groups.items():
            per_strength = [group["errors"].get(index) for index in range(len(STRENGTHS))]
            summaries.append(
                CurveSummary(
                    corruption,
                    fraction,
                    method,
                    tuple(None if e is None else math.fsum(e) / len(e) for e in per_strength),
                    tuple(None if e is None else min(e) for e in per_strength),
                    tuple(None if e is None else max(e) for e in per_strength),
                    tuple(sorted(group["repeats"])),
                )
            )
        return summaries

    def to_dict(self):
        """Return the JSON form of this report."""
        return {
            "format": REPORT_FORMAT_VERSION,
            "config": self.config,
            "cells": list(self.cells),
            "curves": [
                dict(attr.asdict(summary), auec=summary.auec) for summary in self.curves()
            ],
        }


_CELL_KEYS = (
    "id",
    "method_name",
    "corruption",
    "fraction",
    "strength_index",
    "repeat",
    "status",
)


def report_from_dict(data, source="<memory>"):
    """Build a report from its JSON form.

    Raises:
        FormatError: if the format version or a cell record is not understood.
    """
    if not isinstance(data, dict) or data.get("format") != REPORT_FORMAT_VERSION:
        raise FormatError(source, f'expected format "{REPORT_FORMAT_VERSION}"')
    cells = data.get("cells")
    if not isinstance(cells, list):
        raise FormatError(source, '"cells" must be a list')
    for row, cell in enumerate(cells):
        missing = [key for key in _CELL_KEYS if not isinstance(cell, dict) or key not in cell]
        if missing:
            raise FormatError(source, f'cell is missing {", ".join(missing)}', row=row)
        if cell["status"] == "ok" and not isinstance(cell.get("percent_error"), (int, float)):
            raise FormatError(source, "successful cell without percent_error", row=row)
    return SweepReport(data.get("config", {}), cells)


def save_report(report, path):
    """Write `report` as JSON to `path`."""
    _write_json(Path(path), report.to_dict())


def load_report(path):
    """Read a report written by `save_report`.

    Raises:
        FormatError: if the file is not a report.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except ValueError as e:
        raise FormatError(path, f"not JSON: {e}") from e
    return report_from_dict(data, path)
