"""End-to-end label-noise correction methods.

Every method takes a `TrustedSplit` whose untrusted labels may be corrupted and returns
a classifier of the true label:

========================  ===========================================================
kind                      what it does
========================  ===========================================================
``glc``                   train f on untrusted data, average f over trusted examples
                          of each class to get Ĉ, train a fresh g with the plain loss
                          on trusted examples and the Ĉ-corrected loss on untrusted
``forward``               Ĉ from f's scores at a percentile of each class, corrected
                          loss on every example
``forward_gold``          Forward's Ĉ, but the plain loss on trusted examples
``confusion``             Ĉ from f's confusion matrix on trusted examples, then GLC
``distillation``          soft targets from a model trained on trusted data only,
                          mixed with the untrusted labels
``no_correction``         plain loss on all examples
``trusted_only``          plain loss on trusted examples only
``true_matrix_oracle``    GLC with the true corruption matrix
========================  ===========================================================

All trainings of a run derive their seeds from the run seed (``TrainConfig.seed``) with
fixed labels: the second-stage model of every method is initialized and shuffled the
same way, so methods only differ by what they train on.
"""

import logging
import time
from enum import Enum

import attr
import numpy as np

from goldcorrect.data import Dataset
from goldcorrect.errors import GoldCorrectError, InvalidInputError, MethodError
from goldcorrect.estimation import (
    DEFAULT_PERCENTILE,
    ClassScores,
    base_rates,
    calibrate_temperature,
    estimate_confusion,
    estimate_forward,
    estimate_glc,
    refine_base_rates,
)
from goldcorrect.model import CorrectionPlan, predict, predict_logits, predict_proba
from goldcorrect.numcore import one_hot, softmax
from goldcorrect.optim import train
from goldcorrect.parser import (
    non_negative_float,
    strictly_positive_int,
    unit_interval_float,
)
from goldcorrect.rng import derive_seed

log = logging.getLogger(__name__)

DEFAULT_DISTILLATION_MIXING = 0.5


class MethodKind(Enum):
    """Correction methods and baselines."""

    GLC = "glc"
    FORWARD = "forward"
    FORWARD_GOLD = "forward_gold"
    CONFUSION = "confusion"
    DISTILLATION = "distillation"
    NO_CORRECTION = "no_correction"
    TRUSTED_ONLY = "trusted_only"
    TRUE_MATRIX_ORACLE = "true_matrix_oracle"


def _percentile(value):
    value = float(value)
    if 0 < value <= 100:
        return value
    raise InvalidInputError("percentile", f"must lie in (0, 100], got {value}")


# name: (converter, default) for each parameter a kind accepts; a default of None
# marks an optional parameter that is absent unless given
_PARAMETERS = {
    MethodKind.GLC: {"calibrate": (bool, None), "base_rate_lambda": (non_negative_float, None)},
    MethodKind.FORWARD: {"percentile": (_percentile, DEFAULT_PERCENTILE)},
    MethodKind.FORWARD_GOLD: {"percentile": (_percentile, DEFAULT_PERCENTILE)},
    MethodKind.CONFUSION: {},
    MethodKind.DISTILLATION: {"mixing": (unit_interval_float, DEFAULT_DISTILLATION_MIXING)},
    MethodKind.NO_CORRECTION: {},
    MethodKind.TRUSTED_ONLY: {},
    MethodKind.TRUE_MATRIX_ORACLE: {},
}


@attr.s(frozen=True)
class MethodSpec:
    """A correction method and its parameters.

    Required parameters (Forward's percentile, Distillation's mixing weight) are filled
    with their defaults when missing.

    Raises:
        InvalidInputError: if a parameter is not accepted by the kind or has an
            invalid value.

    """

    kind = attr.ib(type=MethodKind, converter=MethodKind)
    parameters = attr.ib(
        type=tuple, factory=tuple, converter=lambda p: tuple(sorted(dict(p).items()))
    )

    def __attrs_post_init__(self):
        """Check and complete the parameters."""
        accepted = _PARAMETERS[self.kind]
        given = dict(self.parameters)
        unknown = sorted(set(given) - set(accepted))
        if unknown:
            raise InvalidInputError(
                "parameters", f'{", ".join(unknown)} not accepted by "{self.kind.value}"'
            )
        completed = {}
        for name, (converter, default) in accepted.items():
            if name in given:
                completed[name] = converter(given[name])
            elif default is not None:
                completed[name] = default
        object.__setattr__(self, "parameters", tuple(sorted(completed.items())))

    @property
    def params(self):
        """Return the parameters as a dict."""
        return dict(self.parameters)

    @property
    def name(self):
        """Return a short, stable name for tables and seeds."""
        extras = [
            f"{key}={value}"
            for key, value in self.parameters
            if value != _PARAMETERS[self.kind][key][1]
        ]
        return self.kind.value + (f"[{','.join(extras)}]" if extras else "")

    def to_dict(self):
        """Return the JSON form of this spec."""
        return {"kind": self.kind.value, "parameters": self.params}

    @classmethod
    def from_dict(cls, data):
        """Build a spec from its JSON form, or from a bare kind string."""
        if isinstance(data, str):
            return cls(data)
        return cls(data["kind"], data.get("parameters", {}))


@attr.s(frozen=True)
class RunOptions:
    """Knobs shared by every method."""

    upsample_trusted = attr.ib(type=int, converter=strictly_positive_int, default=1)
    include_trusted_in_stage1 = attr.ib(type=bool, default=False)
    allow_missing_classes = attr.ib(type=bool, default=False)

    def to_dict(self):
        """Return the JSON form of these options."""
        return attr.asdict(self)


@attr.s(frozen=True, eq=False)
class MethodResult:
    """Trained model of a method run and what it took to get it."""

    spec = attr.ib(type=MethodSpec)
    model = attr.ib()
    c_hat = attr.ib(default=None)
    temperature = attr.ib(default=None)
    seeds = attr.ib(factory=dict)
    timings = attr.ib(factory=dict)

    def metadata(self, percent_error=None):
        """Return the JSON metadata of this run."""
        return {
            "method": self.spec.to_dict(),
            "c_hat": None if self.c_hat is None else self.c_hat.to_dict(),
            "temperature": self.temperature,
            "seeds": dict(self.seeds),
            "timings": dict(self.timings),
            "percent_error": percent_error,
        }


def _stage(kind, stage, timings, function, *args, **kwargs):
    start = time.perf_counter()
    log.info("%s: %s", kind.value, stage)
    try:
        result = function(*args, **kwargs)
    except GoldCorrectError as e:
        raise MethodError(kind.value, stage, e) from e
    timings[stage] = time.perf_counter() - start
    return result


def _fresh_model(template, split, seed):
    return template.instantiate(split.trusted.d, split.k, seed)


def _stage2_data(split, options):
    """Return features, labels and block sizes of trusted (upsampled) + untrusted."""
    repeats = options.upsample_trusted
    trusted_features = np.tile(split.trusted.features, (repeats, 1))
    trusted_labels = np.tile(split.trusted.labels, repeats)
    features = np.concatenate([trusted_features, split.untrusted.features])
    labels = np.concatenate([trusted_labels, split.untrusted.labels])
    return features, labels, trusted_labels.size, split.untrusted.n


def _train_noisy_classifier(spec, split, template, config, options, seeds, timings):
    """Train f = p̂(ỹ | x) on the untrusted examples (stage 1)."""
    seeds["stage1"] = derive_seed(config.seed, "stage1")
    stage1 = split.untrusted
    if options.include_trusted_in_stage1:
        stage1 = Dataset.concatenate([split.trusted, split.untrusted])
    model = _fresh_model(template, split, seeds["stage1"])
    return _stage(
        spec.kind,
        "stage1",
        timings,
        train,
        model,
        stage1.features,
        stage1.labels,
        config.with_seed(seeds["stage1"]),
    )


def _glc_estimate(spec, split, noisy_model, options, timings):
    temperature = None
    if spec.params.get("calibrate"):
        logits = predict_logits(noisy_model, split.untrusted.features)
        temperature = calibrate_temperature(logits, split.untrusted.labels)
        trusted_probs = softmax(predict_logits(noisy_model, split.trusted.features) / temperature)
    else:
        trusted_probs = predict_proba(noisy_model, split.trusted.features)
    scores = ClassScores(trusted_probs, labels_true=split.trusted.labels)
    c_hat = _stage(
        spec.kind,
        "estimation",
        timings,
        estimate_glc,
        scores,
        allow_missing=options.allow_missing_classes,
    )
    lam = spec.params.get("base_rate_lambda")
    if lam is not None:
        c_hat = _stage(
            spec.kind,
            "base_rate_refinement",
            timings,
            refine_base_rates,
            c_hat,
            base_rates(split.trusted.labels, split.k),
            base_rates(split.untrusted.labels, split.k),
            lam,
        )
    return c_hat, temperature


def run_method(spec, split, template, config, c_true=None, options=None):
    """Run one correction method end to end.

    Args:
        spec (MethodSpec): The method to run.
        split (TrustedSplit): Trusted examples with clean labels, untrusted ones with
            possibly corrupted labels.
        template (ModelTemplate): Architecture of every model trained.
        config (TrainConfig): Hyperparameters; its seed is the run seed.
        c_true (ProbMatrix): The true corruption matrix, required by (and only by)
            ``true_matrix_oracle``.
        options (RunOptions): Upsampling and ablation switches.

    Returns:
        MethodResult: the final model, the Ĉ it was trained with, seeds and timings.

    Raises:
        InvalidInputError: if `c_true` is given to the wrong kind or missing.
        MethodError: if an estimator or a training fails, naming the stage.

    """
    spec = spec if isinstance(spec, MethodSpec) else MethodSpec(spec)
    options = options or RunOptions()
    kind = spec.kind
    if (kind is MethodKind.TRUE_MATRIX_ORACLE) != (c_true is not None):
        raise InvalidInputError(
            "c_true", f'is required by, and only by, "{MethodKind.TRUE_MATRIX_ORACLE.value}"'
        )
    if c_true is not None and c_true.k != split.k:
        raise InvalidInputError("c_true", f"expected {split.k} classes, got {c_true.k}")

    seeds = {"run": config.seed, "final": derive_seed(config.seed, "final")}
    timings = {}
    c_hat = None
    temperature = None
    features, labels, trusted_size, untrusted_size = _stage2_data(split, options)
    corrections = None
    soft_targets = None

    if kind is MethodKind.TRUSTED_ONLY:
        trusted = split.trusted
        features = np.tile(trusted.features, (options.upsample_trusted, 1))
        labels = np.tile(trusted.labels, options.upsample_trusted)
    elif kind is MethodKind.NO_CORRECTION:
        pass
    elif kind is MethodKind.DISTILLATION:
        seeds["teacher"] = derive_seed(config.seed, "teacher")
        teacher = _stage(
            kind,
            "teacher",
            timings,
            train,
            _fresh_model(template, split, seeds["teacher"]),
            split.trusted.features,
            split.trusted.labels,
            config.with_seed(seeds["teacher"]),
        )
        mixing = spec.params["mixing"]
        soft = predict_proba(teacher, split.untrusted.features)
        noisy_targets = one_hot(split.untrusted.labels, split.k)
        untrusted_targets = mixing * soft + (1.0 - mixing) * noisy_targets
        trusted_targets = one_hot(labels[:trusted_size], split.k)
        soft_targets = np.concatenate([trusted_targets, untrusted_targets])
    else:
        if kind is MethodKind.TRUE_MATRIX_ORACLE:
            c_hat = c_true
        else:
            noisy_model = _train_noisy_classifier(
                spec, split, template, config, options, seeds, timings
            )
            if kind is MethodKind.GLC:
                c_hat, temperature = _glc_estimate(spec, split, noisy_model, options, timings)
            elif kind is MethodKind.CONFUSION:
                scores = ClassScores(
                    predict_proba(noisy_model, split.trusted.features),
                    labels_true=split.trusted.labels,
                )
                c_hat = _stage(
                    kind,
                    "estimation",
                    timings,
                    estimate_confusion,
                    scores,
                    allow_missing=options.allow_missing_classes,
                )
            else:
                scores = ClassScores(predict_proba(noisy_model, split.untrusted.features))
                c_hat = _stage(
                    kind,
                    "estimation",
                    timings,
                    estimate_forward,
                    scores,
                    spec.params["percentile"],
                )
        training_matrix = c_hat.for_training()
        trusted_correction = training_matrix if kind is MethodKind.FORWARD else None
        corrections = CorrectionPlan.segments(
            [(trusted_size, trusted_correction), (untrusted_size, training_matrix)], split.k
        )

    final = _stage(
        kind,
        "final",
        timings,
        train,
        _fresh_model(template, split, seeds["final"]),
        features,
        labels,
        config.with_seed(seeds["final"]),
        corrections=corrections,
        soft_targets=soft_targets,
    )
    log.info("%s: done in %.2fs", spec.name, sum(timings.values()))
    return MethodResult(spec, final, c_hat, temperature, seeds, timings)


def evaluate(model, test):
    """Return the percentage of `test` examples whose argmax prediction is wrong.

    Raises:
        InvalidInputError: if `test` is empty.
    """
    if test.n == 0:
        raise InvalidInputError("test", "cannot evaluate on an empty dataset")
    predictions = predict(model, test.features)
    return float(100.0 * np.mean(predictions != test.true_labels))


def train_weak_labeler(dataset, template, config):
    """Train the deliberately weak classifier used to produce weak-classifier labels."""
    seed = derive_seed(config.seed, "weak-labeler")
    model = template.instantiate(dataset.d, dataset.k, seed)
    return train(model, dataset.features, dataset.labels, config.with_seed(seed))


__all__ = [
    "MethodKind",
    "MethodResult",
    "MethodSpec",
    "RunOptions",
    "evaluate",
    "run_method",
    "train_weak_labeler",
]
