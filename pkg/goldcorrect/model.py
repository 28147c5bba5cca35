"""Defines the feed-forward softmax classifier and its checkpoint format.

Examples:
    .. code-block:: python

        from goldcorrect.model import Activation, MlpModel, predict_proba

        model = MlpModel.initialize(784, (256,), 10, Activation.RELU, seed=1)
        model.dims              # (784, 256, 10)
        predict_proba(model, features).shape    # (len(features), 10)

        # No hidden layer gives a multinomial logistic regression
        MlpModel.zeros(4, (), 3)

"""

import json
import logging
import math
from enum import Enum
from pathlib import Path

import attr
import numpy as np
from scipy.special import ndtr

from goldcorrect.errors import FormatError, InvalidInputError
from goldcorrect.numcore import LOSS_FLOOR, as_dense_matrix, as_labels, softmax
from goldcorrect.parser import strictly_positive_int
from goldcorrect.rng import generator

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = "goldcorrect-model/1"

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Activation(Enum):
    """Hidden-layer non-linearities."""

    RELU = "relu"
    GELU = "gelu"

    def apply(self, pre_activations):
        """Return the activation of `pre_activations`."""
        if self is Activation.RELU:
            return np.maximum(pre_activations, 0.0)
        return pre_activations * ndtr(pre_activations)

    def derivative(self, pre_activations):
        """Return the elementwise derivative at `pre_activations`."""
        if self is Activation.RELU:
            return (pre_activations > 0).astype(np.float64)
        density = _INV_SQRT_2PI * np.exp(-0.5 * pre_activations**2)
        return ndtr(pre_activations) + pre_activations * density


def _dims_tuple(values):
    return tuple(strictly_positive_int(value) for value in values)


def _frozen_arrays(arrays):
    frozen = []
    for array in arrays:
        array = np.array(array, dtype=np.float64, copy=True)
        array.setflags(write=False)
        frozen.append(array)
    return tuple(frozen)


@attr.s(frozen=True, eq=False)
class MlpModel:
    """Feed-forward classifier with a softmax output.

    Weights are stored as ``fan_in × fan_out`` matrices, one per layer, so a forward
    pass computes ``h @ W + b``. Instances are immutable: training returns a new model.

    Raises:
        InvalidInputError: if the dimension chain of the layers is inconsistent or a
            parameter is not finite.

    """

    input_dim = attr.ib(type=int, converter=strictly_positive_int)
    hidden_dims = attr.ib(type=tuple, converter=_dims_tuple)
    output_dim = attr.ib(type=int, converter=strictly_positive_int)
    activation = attr.ib(type=Activation, converter=Activation)
    weights = attr.ib(type=tuple, converter=_frozen_arrays)
    biases = attr.ib(type=tuple, converter=_frozen_arrays)

    def __attrs_post_init__(self):
        """Ensure the layers chain together."""
        dims = self.dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise InvalidInputError(
                "weights", f"expected {len(dims) - 1} layers for dims {dims}"
            )
        for layer, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            expected = (dims[layer], dims[layer + 1])
            if weight.shape != expected:
                raise InvalidInputError(
                    f"weights[{layer}]", f"expected shape {expected}, got {weight.shape}"
                )
            if bias.shape != (dims[layer + 1],):
                raise InvalidInputError(
                    f"biases[{layer}]",
                    f"expected shape {(dims[layer + 1],)}, got {bias.shape}",
                )
            if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
                raise InvalidInputError(f"layer {layer}", "holds non-finite parameters")

    @property
    def dims(self):
        """Return the full dimension chain, input to output."""
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def parameter_count(self):
        """Return the number of scalar parameters."""
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @classmethod
    def initialize(cls, input_dim, hidden_dims, output_dim, activation, seed):
        """Build a model with seeded Glorot-uniform weights and zero biases."""
        dims = (input_dim, *hidden_dims, output_dim)
        rng = generator(seed, "init")
        weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases = [np.zeros(fan_out) for fan_out in dims[1:]]
        return cls(input_dim, hidden_dims, output_dim, activation, weights, biases)

    @classmethod
    def zeros(cls, input_dim, hidden_dims, output_dim, activation=Activation.RELU):
        """Build a model whose parameters are all zero."""
        dims = (input_dim, *hidden_dims, output_dim)
        weights = [np.zeros((fan_in, fan_out)) for fan_in, fan_out in zip(dims, dims[1:])]
        biases = [np.zeros(fan_out) for fan_out in dims[1:]]
        return cls(input_dim, hidden_dims, output_dim, activation, weights, biases)

    def with_parameters(self, weights, biases):
        """Return a copy of this model holding other parameters."""
        return attr.evolve(self, weights=weights, biases=biases)


@attr.s(frozen=True)
class ModelTemplate:
    """Architecture of the models a method trains, minus the data-dependent dims."""

    hidden_dims = attr.ib(type=tuple, converter=_dims_tuple, default=(256,))
    activation = attr.ib(type=Activation, converter=Activation, default=Activation.RELU)

    def instantiate(self, input_dim, output_dim, seed):
        """Return a freshly initialized model for the given data shape."""
        return MlpModel.initialize(
            input_dim, self.hidden_dims, output_dim, self.activation, seed
        )

    def to_dict(self):
        """Return the JSON form of this template."""
        return {"hidden_dims": list(self.hidden_dims), "activation": self.activation.value}

    @classmethod
    def from_dict(cls, data):
        """Build a template from its JSON form."""
        return cls(**data)


def _check_features(model, features):
    features = as_dense_matrix(features, "features")
    if features.shape[1] != model.input_dim:
        raise InvalidInputError(
            "features",
            f"expected {model.input_dim} columns, got {features.shape[1]}",
        )
    return features


def _forward(weights, biases, activation, features):
    pre_activations = []
    hidden = features
    for weight, bias in zip(weights[:-1], biases[:-1]):
        pre_activation = hidden @ weight + bias
        pre_activations.append((hidden, pre_activation))
        hidden = activation.apply(pre_activation)
    logits = hidden @ weights[-1] + biases[-1]
    return pre_activations, hidden, logits


def predict_logits(model, features):
    """Return the N×K output-layer logits for `features`."""
    features = _check_features(model, features)
    _, _, logits = _forward(model.weights, model.biases, model.activation, features)
    return logits


def predict_proba(model, features):
    """Return the N×K softmax probabilities for `features`."""
    return softmax(predict_logits(model, features))


def predict(model, features):
    """Return the argmax class of each row, ties going to the lowest class id."""
    return np.argmax(predict_logits(model, features), axis=1)


@attr.s(frozen=True, eq=False)
class CorrectionPlan:
    """Per-example loss correction, compressed into distinct matrices plus indices.

    ``indices[n] == -1`` means example ``n`` uses plain cross-entropy; otherwise it
    uses the corrected loss with ``matrices[indices[n]]``.
    """

    matrices = attr.ib()
    indices = attr.ib()

    @classmethod
    def build(cls, corrections, n, k):
        """Build a plan from a sequence holding a ProbMatrix or None per example."""
        if corrections is None:
            return cls(np.zeros((0, k, k)), np.full(n, -1, dtype=np.int64))
        if isinstance(corrections, CorrectionPlan):
            plan = corrections
        else:
            corrections = list(corrections)
            if len(corrections) != n:
                raise InvalidInputError(
                    "corrections", f"expected {n} entries, got {len(corrections)}"
                )
            matrices = []
            slots = {}
            indices = np.full(n, -1, dtype=np.int64)
            for position, correction in enumerate(corrections):
                if correction is None:
                    continue
                slot = slots.get(id(correction))
                if slot is None:
                    slot = slots[id(correction)] = len(matrices)
                    matrices.append(_matrix_entries(correction))
                indices[position] = slot
            stack = np.array(matrices) if matrices else np.zeros((0, k, k))
            plan = cls(stack, indices)
        if plan.indices.shape != (n,):
            raise InvalidInputError("corrections", f"expected {n} entries")
        if plan.matrices.shape[1:] != (k, k):
            raise InvalidInputError(
                "corrections", f"expected {k}x{k} matrices, got {plan.matrices.shape[1:]}"
            )
        return plan

    @classmethod
    def segments(cls, sizes_and_matrices, k):
        """Build a plan for consecutive blocks sharing one matrix (or None) each."""
        matrices = []
        indices = []
        for size, correction in sizes_and_matrices:
            if correction is None:
                indices.append(np.full(size, -1, dtype=np.int64))
            else:
                indices.append(np.full(size, len(matrices), dtype=np.int64))
                matrices.append(_matrix_entries(correction))
        stack = np.array(matrices) if matrices else np.zeros((0, k, k))
        index_array = np.concatenate(indices) if indices else np.zeros(0, np.int64)
        return cls(stack, index_array)

    def subset(self, rows):
        """Return the plan restricted to `rows`."""
        return CorrectionPlan(self.matrices, self.indices[rows])


def _matrix_entries(correction):
    entries = correction.entries if hasattr(correction, "entries") else correction
    return np.asarray(entries, dtype=np.float64)


def _logit_gradients(probs, labels, plan, soft_targets):
    """Return per-example losses and d(loss)/d(logits)."""
    rows = np.arange(probs.shape[0])
    if soft_targets is not None:
        losses = -np.sum(soft_targets * np.log(np.maximum(probs, LOSS_FLOOR)), axis=1)
        return losses, probs - soft_targets

    gradients = probs.copy()
    losses = np.empty(probs.shape[0])

    plain = plan.indices < 0
    plain_labels = labels[plain]
    plain_rows = rows[plain]
    losses[plain] = -np.log(np.maximum(probs[plain_rows, plain_labels], LOSS_FLOOR))
    gradients[plain_rows, plain_labels] -= 1.0

    corrected = ~plain
    if np.any(corrected):
        corrected_rows = rows[corrected]
        corrected_labels = labels[corrected]
        # column y of each example's Ĉ: p(ỹ = y | y = i) for every i
        columns = plan.matrices[plan.indices[corrected], :, corrected_labels]
        weighted = columns * probs[corrected_rows]
        noisy_probs = weighted.sum(axis=1)
        losses[corrected] = -np.log(np.maximum(noisy_probs, LOSS_FLOOR))
        underflow = noisy_probs <= 0.0
        responsibilities = weighted / np.where(underflow, 1.0, noisy_probs)[:, None]
        if np.any(underflow):
            # limit of the responsibilities when every probability vanishes
            column_sums = columns[underflow].sum(axis=1)
            fallback = np.where(
                column_sums[:, None] > 0,
                columns[underflow] / np.where(column_sums > 0, column_sums, 1.0)[:, None],
                probs[corrected_rows][underflow],
            )
            responsibilities[underflow] = fallback
        gradients[corrected_rows] = probs[corrected_rows] - responsibilities
    return losses, gradients


def forward_backward(
    weights, biases, activation, features, labels, plan, soft_targets, weight_decay
):
    """Return the mean batch loss and the gradients of every parameter.

    This works on raw parameter lists so that training loops can reuse it without
    building a model per batch. The loss is the batch mean of the per-example losses
    plus ``weight_decay * Σ‖W‖²`` over the weight matrices.
    """
    pre_activations, last_hidden, logits = _forward(
        weights, biases, activation, features
    )
    probs = softmax(logits)
    losses, delta = _logit_gradients(probs, labels, plan, soft_targets)
    batch_size = features.shape[0]
    delta = delta / batch_size

    weight_gradients = [None] * len(weights)
    bias_gradients = [None] * len(biases)
    layer_inputs = [hidden for hidden, _ in pre_activations]
    layer_inputs.append(last_hidden)

    for layer in range(len(weights) - 1, -1, -1):
        weight_gradients[layer] = layer_inputs[layer].T @ delta
        bias_gradients[layer] = delta.sum(axis=0)
        if layer > 0:
            upstream = delta @ weights[layer].T
            delta = upstream * activation.derivative(pre_activations[layer - 1][1])

    loss = float(losses.mean())
    if weight_decay:
        loss += weight_decay * sum(float(np.sum(w * w)) for w in weights)
        for layer, weight in enumerate(weights):
            weight_gradients[layer] = weight_gradients[layer] + 2.0 * weight_decay * weight
    return loss, weight_gradients, bias_gradients


def loss_and_gradients(
    model, features, labels=None, corrections=None, soft_targets=None, weight_decay=0.0
):
    """Return the mean loss of `model` on a batch and its parameter gradients.

    Args:
        model (MlpModel): The model to differentiate.
        features (array): N×D inputs.
        labels (array): N class ids. Ignored when `soft_targets` is given.
        corrections (sequence): Optional ProbMatrix (corrected loss) or None (plain
            cross-entropy) per example.
        soft_targets (array): Optional N×K target distributions.
        weight_decay (float): Coefficient of the ``Σ‖W‖²`` penalty.

    Returns:
        tuple: ``(loss, weight_gradients, bias_gradients)``.

    """
    features = _check_features(model, features)
    n = features.shape[0]
    k = model.output_dim
    if soft_targets is not None:
        soft_targets = as_dense_matrix(soft_targets, "soft_targets")
        if soft_targets.shape != (n, k):
            raise InvalidInputError("soft_targets", f"expected shape {(n, k)}")
        labels = np.zeros(n, dtype=np.int64)
    else:
        labels = as_labels(labels, k)
        if labels.size != n:
            raise InvalidInputError("labels", f"expected {n} labels, got {labels.size}")
    plan = CorrectionPlan.build(corrections, n, k)
    return forward_backward(
        model.weights,
        model.biases,
        model.activation,
        features,
        labels,
        plan,
        soft_targets,
        weight_decay,
    )


def model_to_dict(model):
    """Return the JSON-serializable checkpoint of `model`."""
    return {
        "version": MODEL_FORMAT_VERSION,
        "input_dim": model.input_dim,
        "hidden_dims": list(model.hidden_dims),
        "output_dim": model.output_dim,
        "activation": model.activation.value,
        "layers": [
            {
                "rows": weight.shape[0],
                "cols": weight.shape[1],
                "weights": weight.ravel().tolist(),
                "bias": bias.tolist(),
            }
            for weight, bias in zip(model.weights, model.biases)
        ],
    }


def model_from_dict(data, source="<memory>"):
    """Rebuild a model from its checkpoint dict.

    Raises:
        FormatError: if the version is unknown or a field is missing or malformed.
    """
    if data.get("version") != MODEL_FORMAT_VERSION:
        raise FormatError(source, f'unsupported model version {data.get("version")!r}')
    try:
        weights = [
            np.array(layer["weights"], dtype=np.float64).reshape(
                layer["rows"], layer["cols"]
            )
            for layer in data["layers"]
        ]
        biases = [np.array(layer["bias"], dtype=np.float64) for layer in data["layers"]]
        return MlpModel(
            data["input_dim"],
            data["hidden_dims"],
            data["output_dim"],
            data["activation"],
            weights,
            biases,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(source, f"malformed model checkpoint: {e}") from e


def save_model(model, path):
    """Write the checkpoint of `model` to `path` as JSON."""
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model)))
    log.debug("Saved model %s to %s", model.dims, path)


def load_model(path):
    """Read a checkpoint written by `save_model`."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(path, f"invalid JSON: {e.msg}", row=e.lineno) from e
    return model_from_dict(data, source=path)
