"""Defines training configuration, optimizers and the mini-batch training loop."""

import logging
import math
from enum import Enum

import attr
import numpy as np

from goldcorrect.errors import DivergenceError, InvalidInputError
from goldcorrect.model import CorrectionPlan, forward_backward
from goldcorrect.numcore import as_dense_matrix, as_labels
from goldcorrect.parser import (
    non_negative_float,
    seed_int,
    strictly_positive_float,
    strictly_positive_int,
    unit_interval_float,
)
from goldcorrect.rng import generator

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


class Optimizer(Enum):
    """Supported parameter update rules."""

    ADAM = "adam"
    SGD_MOMENTUM = "sgd_momentum"


@attr.s(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    Defaults are the MNIST setup: Adam for 10 epochs, batches of 32, a learning rate of
    0.001 and an ℓ2 weight decay of 1e-6.
    """

    epochs = attr.ib(type=int, converter=strictly_positive_int, default=10)
    batch_size = attr.ib(type=int, converter=strictly_positive_int, default=32)
    learning_rate = attr.ib(type=float, converter=strictly_positive_float, default=1e-3)
    optimizer = attr.ib(type=Optimizer, converter=Optimizer, default=Optimizer.ADAM)
    weight_decay_lambda = attr.ib(type=float, converter=non_negative_float, default=1e-6)
    seed = attr.ib(type=int, converter=seed_int, default=0)
    momentum = attr.ib(type=float, converter=unit_interval_float, default=0.9)

    def with_seed(self, seed):
        """Return a copy of this config using another seed."""
        return attr.evolve(self, seed=seed)

    def to_dict(self):
        """Return the JSON form of this config."""
        data = attr.asdict(self)
        data["optimizer"] = self.optimizer.value
        return data

    @classmethod
    def from_dict(cls, data):
        """Build a config from its JSON form."""
        return cls(**data)


class _Adam:
    def __init__(self, parameters, learning_rate):
        self.learning_rate = learning_rate
        self.first_moments = [np.zeros_like(p) for p in parameters]
        self.second_moments = [np.zeros_like(p) for p in parameters]
        self.steps = 0

    def step(self, parameters, gradients):
        self.steps += 1
        correction1 = 1.0 - ADAM_BETA1**self.steps
        correction2 = 1.0 - ADAM_BETA2**self.steps
        step_size = self.learning_rate * math.sqrt(correction2) / correction1
        for parameter, gradient, first, second in zip(
            parameters, gradients, self.first_moments, self.second_moments
        ):
            first *= ADAM_BETA1
            first += (1.0 - ADAM_BETA1) * gradient
            second *= ADAM_BETA2
            second += (1.0 - ADAM_BETA2) * gradient * gradient
            parameter -= step_size * first / (np.sqrt(second) + ADAM_EPSILON)


class _SgdMomentum:
    def __init__(self, parameters, learning_rate, momentum):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocities = [np.zeros_like(p) for p in parameters]

    def step(self, parameters, gradients):
        for parameter, gradient, velocity in zip(parameters, gradients, self.velocities):
            velocity *= self.momentum
            velocity += gradient
            parameter -= self.learning_rate * velocity


def _make_optimizer(config, parameters):
    if config.optimizer is Optimizer.ADAM:
        return _Adam(parameters, config.learning_rate)
    return _SgdMomentum(parameters, config.learning_rate, config.momentum)


def train(model, features, labels, config, corrections=None, soft_targets=None):
    """Train `model` with mini-batch backpropagation and return the trained copy.

    Examples are shuffled every epoch from a generator keyed by ``config.seed``, and
    the last partial batch of an epoch is trained too. The input model is left
    untouched.

    Args:
        model (MlpModel): The initial model.
        features (array): N×D inputs.
        labels (array): N class ids (ignored when `soft_targets` is given).
        config (TrainConfig): Hyperparameters.
        corrections (sequence or CorrectionPlan): Optional per-example ProbMatrix
            (corrected cross-entropy) or None (plain cross-entropy).
        soft_targets (array): Optional N×K target distributions.

    Raises:
        InvalidInputError: on dimension mismatches.
        DivergenceError: if a batch loss is not finite.

    """
    features = as_dense_matrix(features, "features")
    n = features.shape[0]
    k = model.output_dim
    if features.shape[1] != model.input_dim:
        raise InvalidInputError(
            "features", f"expected {model.input_dim} columns, got {features.shape[1]}"
        )
    if n == 0:
        raise InvalidInputError("features", "no training example")
    if soft_targets is not None:
        soft_targets = as_dense_matrix(soft_targets, "soft_targets")
        if soft_targets.shape != (n, k):
            raise InvalidInputError("soft_targets", f"expected shape {(n, k)}")
        labels = np.zeros(n, dtype=np.int64)
    else:
        labels = as_labels(labels, k)
        if labels.size != n:
            raise InvalidInputError(
                "labels", f"{labels.size} labels for {n} feature rows"
            )
    plan = CorrectionPlan.build(corrections, n, k)

    weights = [np.array(w) for w in model.weights]
    biases = [np.array(b) for b in model.biases]
    optimizer = _make_optimizer(config, weights + biases)
    rng = generator(config.seed, "shuffle")

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            rows = order[start : start + config.batch_size]
            try:
                loss, weight_gradients, bias_gradients = forward_backward(
                    weights,
                    biases,
                    model.activation,
                    features[rows],
                    labels[rows],
                    plan.subset(rows),
                    None if soft_targets is None else soft_targets[rows],
                    config.weight_decay_lambda,
                )
            except InvalidInputError as e:
                # inputs were checked above, so only overflowed logits end up here
                raise DivergenceError(epoch, batch_index, math.inf) from e
            if not math.isfinite(loss):
                raise DivergenceError(epoch, batch_index, loss)
            optimizer.step(weights + biases, weight_gradients + bias_gradients)
            if not all(np.all(np.isfinite(p)) for p in weights + biases):
                raise DivergenceError(epoch, batch_index, loss)
            total += loss * rows.size
        log.debug("Epoch %d/%d: mean loss %.5f", epoch + 1, config.epochs, total / n)

    return model.with_parameters(weights, biases)
