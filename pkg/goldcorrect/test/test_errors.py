import pytest

from goldcorrect.errors import (
    DivergenceError,
    FormatError,
    GoldCorrectError,
    InsufficientDataError,
    InvalidInputError,
    LabelOutOfRangeError,
    MethodError,
    MissingClassError,
    RegularizationRequiredError,
    SolverError,
)


@pytest.mark.parametrize(
    "error, expected_message",
    (
        (InvalidInputError("k", "need at least 2 classes"), 'Invalid "k": need at least 2 classes'),
        (LabelOutOfRangeError(7, 3), "Label 7 is out of range for 3 classes"),
        (FormatError("train.idx", "bad magic", offset=0), '"train.idx" at byte offset 0: bad magic'),
        (FormatError("data.csv", "ragged row", row=4), '"data.csv" at row 4: ragged row'),
        (FormatError("c.json", "not JSON"), '"c.json": not JSON'),
        (
            MissingClassError([2, 5]),
            "No trusted example for class(es) 2, 5. Use a stratified split or allow the "
            "identity fallback",
        ),
        (
            RegularizationRequiredError(3, 8),
            "KKT system is rank deficient (3 < 8) with lambda = 0. Use a strictly positive lambda",
        ),
        (InsufficientDataError(5, 3), "No cell has at least 5 examples (largest has 3)"),
        (DivergenceError(2, 17, float("nan")), "Training diverged at epoch 2, batch 17: loss is nan"),
        (SolverError(1e-6, 1e-9), "KKT residual 1.000e-06 is above the tolerance 1.0e-09"),
    ),
)
def test_errors_build_their_message(error, expected_message):
    with pytest.raises(GoldCorrectError) as exc_info:
        raise error

    assert exc_info.value.args == (expected_message,)


@pytest.mark.parametrize(
    "error, builtin",
    (
        (InvalidInputError("a", "b"), ValueError),
        (LabelOutOfRangeError(1, 1), IndexError),
        (FormatError("f", "r"), ValueError),
        (DivergenceError(0, 0, 1.0), ArithmeticError),
        (SolverError(1.0, 1.0), ArithmeticError),
        (MethodError("glc", "stage1", ValueError()), RuntimeError),
    ),
)
def test_errors_are_builtin_errors_too(error, builtin):
    assert isinstance(error, builtin)


def test_method_error_keeps_its_cause():
    cause = MissingClassError([1])
    error = MethodError("glc", "estimation", cause)

    assert error.cause is cause
    assert error.kind == "glc"
    assert error.stage == "estimation"
    assert error.args[0].startswith('Method "glc" failed during estimation: No trusted example')
