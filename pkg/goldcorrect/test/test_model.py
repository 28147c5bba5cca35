import numpy as np
import pytest

from goldcorrect.corruption import ProbMatrix, make_flip, make_uniform
from goldcorrect.errors import FormatError, InvalidInputError
from goldcorrect.model import (
    MODEL_FORMAT_VERSION,
    Activation,
    CorrectionPlan,
    MlpModel,
    ModelTemplate,
    load_model,
    loss_and_gradients,
    model_from_dict,
    model_to_dict,
    predict,
    predict_proba,
    save_model,
)

EPSILON = 1e-6


def _numerical_gradients(model, loss_of):
    """Central finite differences over every parameter of `model`."""
    weights = [np.array(w) for w in model.weights]
    biases = [np.array(b) for b in model.biases]
    numerical = []
    for parameters in (weights, biases):
        gradients = []
        for parameter in parameters:
            gradient = np.zeros_like(parameter)
            for index in np.ndindex(parameter.shape):
                original = parameter[index]
                parameter[index] = original + EPSILON
                plus = loss_of(model.with_parameters(weights, biases))
                parameter[index] = original - EPSILON
                minus = loss_of(model.with_parameters(weights, biases))
                parameter[index] = original
                gradient[index] = (plus - minus) / (2 * EPSILON)
            gradients.append(gradient)
        numerical.append(gradients)
    return numerical


def _relative_error(analytic, numerical):
    scale = np.linalg.norm(analytic) + np.linalg.norm(numerical)
    return np.linalg.norm(analytic - numerical) / max(scale, 1e-12)


@pytest.mark.parametrize("activation", (Activation.RELU, Activation.GELU))
@pytest.mark.parametrize("corrected", (False, True))
@pytest.mark.parametrize("weight_decay", (0.0, 1e-3))
def test_analytic_gradients_match_finite_differences(activation, corrected, weight_decay):
    rng = np.random.default_rng(2)
    model = MlpModel.initialize(4, (5,), 3, activation, seed=9)
    # biases away from zero so that no ReLU sits on its kink
    model = model.with_parameters(
        model.weights, [rng.uniform(0.1, 0.3, size=b.shape) for b in model.biases]
    )
    features = rng.normal(size=(6, 4))
    labels = np.array([0, 1, 2, 2, 1, 0])
    corrections = None
    if corrected:
        c_hat = ProbMatrix([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]])
        corrections = [c_hat, None, c_hat, c_hat, None, c_hat]

    def loss_of(candidate):
        return loss_and_gradients(candidate, features, labels, corrections, weight_decay=weight_decay)[0]

    _, weight_gradients, bias_gradients = loss_and_gradients(
        model, features, labels, corrections, weight_decay=weight_decay
    )
    numerical_weights, numerical_biases = _numerical_gradients(model, loss_of)

    for analytic, numerical in zip(weight_gradients + bias_gradients, numerical_weights + numerical_biases):
        assert _relative_error(analytic, numerical) < 1e-4


def test_soft_target_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    model = MlpModel.initialize(4, (5,), 3, Activation.GELU, seed=1)
    features = rng.normal(size=(5, 4))
    targets = np.array([[0.2, 0.5, 0.3]] * 5)

    def loss_of(candidate):
        return loss_and_gradients(candidate, features, soft_targets=targets)[0]

    _, weight_gradients, bias_gradients = loss_and_gradients(model, features, soft_targets=targets)
    numerical_weights, numerical_biases = _numerical_gradients(model, loss_of)

    for analytic, numerical in zip(weight_gradients + bias_gradients, numerical_weights + numerical_biases):
        assert _relative_error(analytic, numerical) < 1e-4


def test_identity_correction_is_bitwise_plain_cross_entropy():
    rng = np.random.default_rng(0)
    model = MlpModel.initialize(3, (4,), 3, Activation.RELU, seed=0)
    features = rng.normal(size=(8, 3))
    labels = rng.integers(0, 3, size=8)

    plain = loss_and_gradients(model, features, labels)
    corrected = loss_and_gradients(model, features, labels, [ProbMatrix.identity(3)] * 8)

    assert plain[0] == corrected[0]
    for first, second in zip(plain[1] + plain[2], corrected[1] + corrected[2]):
        np.testing.assert_array_equal(first, second)


def test_total_corruption_leaves_no_gradient():
    rng = np.random.default_rng(0)
    model = MlpModel.initialize(3, (4,), 3, Activation.RELU, seed=0)
    features = rng.normal(size=(8, 3))
    loss, weight_gradients, bias_gradients = loss_and_gradients(
        model, features, rng.integers(0, 3, size=8), [make_uniform(3, 1.0)] * 8
    )

    assert loss == pytest.approx(np.log(3))
    for gradient in weight_gradients + bias_gradients:
        np.testing.assert_allclose(gradient, 0.0, atol=1e-12)


def test_zero_model_predicts_uniform_probabilities():
    model = MlpModel.zeros(4, (3,), 5)

    np.testing.assert_allclose(predict_proba(model, np.ones((2, 4))), np.full((2, 5), 0.2))
    np.testing.assert_array_equal(predict(model, np.ones((2, 4))), [0, 0])


def test_initialize_is_seeded():
    first = MlpModel.initialize(4, (3,), 2, Activation.RELU, seed=5)
    second = MlpModel.initialize(4, (3,), 2, Activation.RELU, seed=5)
    third = MlpModel.initialize(4, (3,), 2, Activation.RELU, seed=6)

    for a, b in zip(first.weights, second.weights):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(first.weights[0], third.weights[0])
    assert first.dims == (4, 3, 2)
    assert first.parameter_count == 4 * 3 + 3 + 3 * 2 + 2


def test_model_parameters_are_read_only():
    model = MlpModel.zeros(2, (), 2)

    with pytest.raises(ValueError):
        model.weights[0][0, 0] = 1.0


@pytest.mark.parametrize(
    "weights, biases",
    (
        ([np.zeros((2, 3))], [np.zeros(3)]),
        ([np.zeros((2, 2)), np.zeros((2, 2))], [np.zeros(2)]),
        ([np.full((2, 2), np.nan)], [np.zeros(2)]),
    ),
)
def test_model_rejects_inconsistent_layers(weights, biases):
    with pytest.raises(InvalidInputError):
        MlpModel(2, (), 2, "relu", weights, biases)


def test_predict_rejects_wrong_feature_count():
    with pytest.raises(InvalidInputError):
        predict_proba(MlpModel.zeros(4, (), 2), np.ones((1, 3)))


def test_template_instantiates_fresh_models():
    template = ModelTemplate(hidden_dims=[6, 4], activation="gelu")
    model = template.instantiate(3, 2, seed=1)

    assert model.dims == (3, 6, 4, 2)
    assert model.activation is Activation.GELU
    assert ModelTemplate.from_dict(template.to_dict()) == template


def test_correction_plan_deduplicates_matrices():
    c_hat = make_flip(3, 0.4, seed=1)
    plan = CorrectionPlan.build([c_hat, None, c_hat], 3, 3)

    assert plan.matrices.shape == (1, 3, 3)
    np.testing.assert_array_equal(plan.indices, [0, -1, 0])
    np.testing.assert_array_equal(plan.subset(np.array([1, 2])).indices, [-1, 0])


def test_correction_plan_segments():
    plan = CorrectionPlan.segments([(2, None), (3, make_uniform(2, 0.5))], 2)

    np.testing.assert_array_equal(plan.indices, [-1, -1, 0, 0, 0])
    with pytest.raises(InvalidInputError):
        CorrectionPlan.build(plan, 4, 2)


def test_checkpoints_reload_identically(tmp_path):
    model = MlpModel.initialize(3, (4,), 2, Activation.GELU, seed=3)
    path = tmp_path / "model.json"

    save_model(model, path)
    loaded = load_model(path)

    assert loaded.dims == model.dims
    assert loaded.activation is Activation.GELU
    for a, b in zip(model.weights + model.biases, loaded.weights + loaded.biases):
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize(
    "mutate",
    (
        lambda data: data.update(version="goldcorrect-model/0"),
        lambda data: data.pop("layers"),
        lambda data: data["layers"][0].update(rows=7),
    ),
)
def test_malformed_checkpoints_are_format_errors(mutate):
    data = model_to_dict(MlpModel.zeros(3, (), 2))
    assert data["version"] == MODEL_FORMAT_VERSION
    mutate(data)

    with pytest.raises(FormatError):
        model_from_dict(data)


def test_load_model_rejects_invalid_json(tmp_path):
    path = tmp_path / "model.json"
    path.write_text("{not json")

    with pytest.raises(FormatError):
        load_model(path)
