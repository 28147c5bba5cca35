"""Estimates of the corruption matrix from a classifier trained on noisy labels.

All estimators read the softmax outputs ``p̂(ỹ | x)`` of the noisy-label classifier,
wrapped in a `ClassScores`:

* `estimate_glc` averages the scores of the trusted examples of each true class.
* `estimate_forward` takes, for each class, the score row of the example sitting at a
  percentile of that class's scores (no trusted data needed).
* `estimate_confusion` row-normalizes the confusion matrix of the classifier's argmax
  on the trusted examples.

`refine_base_rates` and `calibrate_temperature` are optional refinements of an
estimate, and `conditional_independence_check` tests the assumption behind
`estimate_glc` on binned data.
"""

import json
import logging
import math
import warnings

import attr
import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar
from scipy.special import log_softmax
from scipy.stats import chi2_contingency

from goldcorrect.corruption import ProbMatrix
from goldcorrect.errors import (
    DegenerateLabelsWarning,
    InsufficientDataError,
    InvalidInputError,
    MissingClassError,
    MissingClassWarning,
    RegularizationRequiredError,
    SolverError,
)
from goldcorrect.numcore import as_dense_matrix, as_labels, is_probability_vector, softmax
from goldcorrect.parser import non_negative_float

log = logging.getLogger(__name__)

DEFAULT_PERCENTILE = 97.0
KKT_TOLERANCE = 1e-9
TEMPERATURE_BOUNDS = (0.05, 20.0)
TEMPERATURE_TOLERANCE = 1e-4
INDEPENDENCE_ALPHA = 0.01
INDEPENDENCE_MIN_COUNT = 5


def _optional_labels(values):
    if values is None:
        return None
    return as_labels(values)


@attr.s(frozen=True, eq=False)
class ClassScores:
    """Softmax scores of a noisy-label classifier on a set of examples.

    Raises:
        InvalidInputError: if a score row is not a probability vector or a label
            column does not have one entry per row.

    """

    scores = attr.ib(converter=lambda values: as_dense_matrix(values, "scores"))
    labels_true = attr.ib(default=None, converter=_optional_labels)
    labels_noisy = attr.ib(default=None, converter=_optional_labels)

    def __attrs_post_init__(self):
        """Ensure scores and labels are consistent."""
        if not is_probability_vector(self.scores):
            raise InvalidInputError("scores", "every row must be a probability vector")
        for name in ("labels_true", "labels_noisy"):
            labels = getattr(self, name)
            if labels is None:
                continue
            if labels.size != self.n:
                raise InvalidInputError(name, f"expected {self.n} labels, got {labels.size}")
            as_labels(labels, self.k, what=name)

    @property
    def n(self):
        """Return the number of examples."""
        return self.scores.shape[0]

    @property
    def k(self):
        """Return the number of classes."""
        return self.scores.shape[1]

    @classmethod
    def from_logits(cls, logits, temperature=1.0, labels_true=None, labels_noisy=None):
        """Build scores from logits, optionally divided by a temperature first."""
        return cls(
            apply_temperature(logits, temperature),
            labels_true=labels_true,
            labels_noisy=labels_noisy,
        )


def _trusted_labels(trusted_scores):
    if trusted_scores.labels_true is None:
        raise InvalidInputError("trusted_scores", "true labels are required")
    return trusted_scores.labels_true


def _rows_from_class_means(values, labels, k, allow_missing):
    """Average `values` per class, handling classes without any example."""
    counts = np.bincount(labels, minlength=k)
    missing = np.flatnonzero(counts == 0)
    if missing.size and not allow_missing:
        raise MissingClassError(missing)

    sums = np.zeros((k, values.shape[1]))
    np.add.at(sums, labels, values)
    rows = sums / np.maximum(counts, 1)[:, None]
    notes = []
    for class_id in missing:
        rows[class_id] = np.eye(k)[class_id]
        note = f"class {class_id} has no trusted example, its row is the identity"
        notes.append(note)
        warnings.warn(note, MissingClassWarning, stacklevel=3)
        log.warning(note)
    return rows, tuple(notes)


def estimate_glc(trusted_scores, allow_missing=False):
    """Return the GLC estimate: row i is the mean score of trusted examples of class i.

    Args:
        trusted_scores (ClassScores): Scores of the trusted examples, with their
            true labels.
        allow_missing (bool): Whether a class without trusted examples gets an
            identity row (with a warning) instead of raising.

    Raises:
        MissingClassError: if a class has no trusted example and `allow_missing` is
            False.

    """
    labels = _trusted_labels(trusted_scores)
    rows, notes = _rows_from_class_means(
        trusted_scores.scores, labels, trusted_scores.k, allow_missing
    )
    rows = rows / rows.sum(axis=1, keepdims=True)
    return ProbMatrix(rows, notes=notes)


def nearest_rank_index(values, percentile):
    """Return the index of the element at the nearest-rank `percentile` of `values`.

    The nearest rank is ``ceil(percentile / 100 · n)``; ties keep their original order.
    """
    n = values.size
    rank = max(1, math.ceil(percentile / 100.0 * n))
    order = np.argsort(values, kind="stable")
    return int(order[rank - 1])


def estimate_forward(untrusted_scores, percentile=DEFAULT_PERCENTILE):
    """Return the Forward estimate from scores on the untrusted examples.

    For each class i, the example whose class-i score sits at the given nearest-rank
    percentile is taken as a prototype of class i, and row i is its full score row.
    A percentile of 100 gives the plain argmax variant.

    Raises:
        InvalidInputError: if there is no example or `percentile` is outside (0, 100].
    """
    if untrusted_scores.n == 0:
        raise InvalidInputError("untrusted_scores", "no example to estimate from")
    percentile = float(percentile)
    if not 0 < percentile <= 100:
        raise InvalidInputError("percentile", f"must lie in (0, 100], got {percentile}")
    scores = untrusted_scores.scores
    rows = np.array(
        [
            scores[nearest_rank_index(scores[:, class_id], percentile)]
            for class_id in range(untrusted_scores.k)
        ]
    )
    return ProbMatrix(rows / rows.sum(axis=1, keepdims=True))


def estimate_confusion(trusted_scores, allow_missing=False):
    """Return the row-normalized confusion matrix of the argmax on trusted examples.

    Argmax ties go to the lowest class id. Classes without trusted example are handled
    as in `estimate_glc`.
    """
    labels = _trusted_labels(trusted_scores)
    k = trusted_scores.k
    predictions = np.argmax(trusted_scores.scores, axis=1)
    one_hot_predictions = np.eye(k)[predictions]
    rows, notes = _rows_from_class_means(one_hot_predictions, labels, k, allow_missing)
    return ProbMatrix(rows, notes=notes)


def base_rates(labels, k):
    """Return the empirical class frequencies of `labels`."""
    labels = as_labels(labels, k)
    if labels.size == 0:
        raise InvalidInputError("labels", "cannot compute base rates of no label")
    return np.bincount(labels, minlength=k) / labels.size


def _probability_vector(values, k, what):
    vector = np.asarray(values, dtype=np.float64)
    if vector.shape != (k,) or not is_probability_vector(vector):
        raise InvalidInputError(what, f"expected a probability vector of length {k}")
    return vector


def refine_base_rates(c0, b, b_tilde, lam):
    """Refine an estimate so that the base rates it implies match the observed ones.

    Solves ``min ‖Cᵀb − b̃‖² + λ‖C − C₀‖²`` subject to ``C1 = 1`` through the linear
    KKT system of this equality-constrained quadratic program. Entries are not
    constrained to be nonnegative, so the result is a `signed` ProbMatrix; call
    `ProbMatrix.for_training` before training with it.

    Args:
        c0 (ProbMatrix): The initial estimate.
        b (array): Base rates of the true labels (trusted set).
        b_tilde (array): Base rates of the noisy labels (untrusted set).
        lam (float): Weight of the proximal term, at least 0.

    Raises:
        RegularizationRequiredError: if ``lam == 0`` and the system is singular.
        SolverError: if the solution does not satisfy the KKT system to 1e-9.

    """
    k = c0.k
    b = _probability_vector(b, k, "b")
    b_tilde = _probability_vector(b_tilde, k, "b_tilde")
    lam = non_negative_float(lam)
    size = k * k

    # (Cᵀb)_j = Σᵢ bᵢ C[i, j] with C flattened row-major
    base_rate_map = np.zeros((k, size))
    for i in range(k):
        base_rate_map[np.arange(k), i * k + np.arange(k)] = b[i]
    row_sums = np.kron(np.eye(k), np.ones(k))

    hessian = 2.0 * (base_rate_map.T @ base_rate_map + lam * np.eye(size))
    gradient_offset = 2.0 * (base_rate_map.T @ b_tilde + lam * c0.entries.ravel())
    kkt = np.block([[hessian, row_sums.T], [row_sums, np.zeros((k, k))]])
    rhs = np.concatenate([gradient_offset, np.ones(k)])

    if lam == 0:
        rank = np.linalg.matrix_rank(kkt)
        if rank < kkt.shape[0]:
            raise RegularizationRequiredError(rank, kkt.shape[0])
    try:
        solution = linalg.solve(kkt, rhs)
    except linalg.LinAlgError as e:
        raise SolverError(float("inf"), KKT_TOLERANCE) from e
    residual = np.linalg.norm(kkt @ solution - rhs) / max(
        1.0, np.linalg.norm(kkt, ord=np.inf) * np.linalg.norm(solution, ord=np.inf)
    )
    if residual > KKT_TOLERANCE:
        raise SolverError(residual, KKT_TOLERANCE)

    refined = solution[:size].reshape(k, k)
    refined += ((1.0 - refined.sum(axis=1)) / k)[:, None]
    return ProbMatrix(refined, notes=c0.notes, signed=True)


def apply_temperature(logits, temperature):
    """Return ``softmax(logits / temperature)``."""
    if temperature <= 0:
        raise InvalidInputError("temperature", "must be strictly positive")
    return softmax(as_dense_matrix(logits, "logits") / temperature)


def temperature_nll(logits, labels, temperature):
    """Return the mean negative log-likelihood of ``softmax(logits / T)``."""
    log_probs = log_softmax(logits / temperature, axis=1)
    return float(-np.mean(log_probs[np.arange(labels.size), labels]))


def calibrate_temperature(logits, labels):
    """Return the temperature minimizing the NLL of ``softmax(logits / T)``.

    The search runs over T in [0.05, 20] with an absolute tolerance of 1e-4 on T. It
    uses scipy's bounded Brent minimizer instead of a plain golden-section search:
    Brent mixes parabolic steps into the golden-section ones, and both land on the
    same minimum since the NLL is convex in 1/T and so unimodal in T. A result worse
    than T = 1 is replaced by 1.

    Raises:
        InvalidInputError: if there are fewer examples than classes.
    """
    logits = as_dense_matrix(logits, "logits")
    labels = as_labels(labels, logits.shape[1])
    if labels.size != logits.shape[0]:
        raise InvalidInputError("labels", f"expected {logits.shape[0]} labels")
    if logits.shape[0] < logits.shape[1]:
        raise InvalidInputError(
            "logits", f"need at least as many examples as classes ({logits.shape[1]})"
        )
    if np.unique(labels).size < 2:
        message = "calibration labels hold a single class, keeping temperature 1"
        warnings.warn(message, DegenerateLabelsWarning, stacklevel=2)
        log.warning(message)
        return 1.0

    result = minimize_scalar(
        lambda temperature: temperature_nll(logits, labels, temperature),
        bounds=TEMPERATURE_BOUNDS,
        method="bounded",
        options={"xatol": TEMPERATURE_TOLERANCE},
    )
    temperature = float(result.x)
    if temperature_nll(logits, labels, temperature) > temperature_nll(logits, labels, 1.0):
        temperature = 1.0
    log.info("Calibrated temperature: %.4f", temperature)
    return temperature


@attr.s(frozen=True)
class CellStatistic:
    """Chi-square test of independence of y and ỹ within one cell of x."""

    cell = attr.ib()
    n = attr.ib(type=int)
    statistic = attr.ib(type=float, default=None)
    dof = attr.ib(type=int, default=None)
    p_value = attr.ib(type=float, default=None)
    rejected = attr.ib(type=bool, default=False)
    degenerate = attr.ib(type=bool, default=False)


@attr.s(frozen=True)
class IndependenceReport:
    """Outcome of `conditional_independence_check`."""

    alpha = attr.ib(type=float)
    min_count = attr.ib(type=int)
    cells = attr.ib(type=tuple, converter=tuple)
    skipped_cells = attr.ib(type=int)

    @property
    def tested_cells(self):
        """Return the cells where a test was actually run."""
        return tuple(cell for cell in self.cells if not cell.degenerate)

    @property
    def degenerate_cells(self):
        """Return the cells where y or ỹ takes a single value."""
        return tuple(cell for cell in self.cells if cell.degenerate)

    @property
    def rejection_fraction(self):
        """Return the fraction of tested cells rejecting independence."""
        tested = self.tested_cells
        if not tested:
            return 0.0
        return sum(cell.rejected for cell in tested) / len(tested)

    def to_dict(self):
        """Return the JSON form of this report."""
        return {
            "alpha": self.alpha,
            "min_count": self.min_count,
            "rejection_fraction": self.rejection_fraction,
            "tested_cells": len(self.tested_cells),
            "degenerate_cells": len(self.degenerate_cells),
            "skipped_cells": self.skipped_cells,
            "cells": [
                {**attr.asdict(cell), "cell": _json_cell(cell.cell)} for cell in self.cells
            ],
        }

    def to_json(self):
        """Return this report as a JSON document."""
        return json.dumps(self.to_dict(), indent=2)


def _json_cell(cell):
    if isinstance(cell, (np.integer, np.floating)):
        return cell.item()
    return cell


def conditional_independence_check(
    labels_true, labels_noisy, cells, alpha=INDEPENDENCE_ALPHA, min_count=INDEPENDENCE_MIN_COUNT
):
    """Test, cell by cell, whether the noisy label is independent of the true label.

    `cells` assigns each example to a bin of the input space. Cells with fewer than
    `min_count` examples are skipped. Cells where y or ỹ takes a single value cannot
    show any dependence and are reported as degenerate without a test.

    Raises:
        InsufficientDataError: if no cell has at least `min_count` examples.
    """
    labels_true = as_labels(labels_true, what="labels_true")
    labels_noisy = as_labels(labels_noisy, what="labels_noisy")
    cells = np.asarray(cells)
    if not labels_true.size == labels_noisy.size == cells.shape[0]:
        raise InvalidInputError("cells", "labels and cells must have the same length")

    cell_ids, inverse, counts = np.unique(
        cells, axis=0 if cells.ndim > 1 else None, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    if counts.size == 0 or counts.max() < min_count:
        raise InsufficientDataError(min_count, int(counts.max()) if counts.size else 0)

    statistics = []
    skipped = 0
    for position, count in enumerate(counts):
        if count < min_count:
            skipped += 1
            continue
        members = inverse == position
        true_values, true_index = np.unique(labels_true[members], return_inverse=True)
        noisy_values, noisy_index = np.unique(labels_noisy[members], return_inverse=True)
        cell = cell_ids[position]
        cell = tuple(cell.tolist()) if np.ndim(cell) else _json_cell(cell)
        if true_values.size < 2 or noisy_values.size < 2:
            statistics.append(CellStatistic(cell, int(count), degenerate=True))
            continue
        table = np.zeros((true_values.size, noisy_values.size))
        np.add.at(table, (true_index.reshape(-1), noisy_index.reshape(-1)), 1)
        result = chi2_contingency(table, correction=False)
        statistic, p_value, dof = result[0], result[1], result[2]
        statistics.append(
            CellStatistic(
                cell,
                int(count),
                statistic=float(statistic),
                dof=int(dof),
                p_value=float(p_value),
                rejected=bool(p_value < alpha),
            )
        )
    report = IndependenceReport(alpha, min_count, statistics, skipped)
    log.info(
        "Independence check: %d tested cells, %d degenerate, rejection fraction %.3f",
        len(report.tested_cells),
        len(report.degenerate_cells),
        report.rejection_fraction,
    )
    return report
