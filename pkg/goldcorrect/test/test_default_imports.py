import pytest

import goldcorrect


@pytest.mark.parametrize("name", goldcorrect.__all__)
def test_(name):
    getattr(goldcorrect, name)


@pytest.mark.parametrize(
    "name",
    [
        "Dataset",
        "MethodSpec",
        "ProbMatrix",
        "SweepConfig",
        "estimate_glc",
        "run_method",
        "run_sweep",
    ],
)
def test_public_names(name):
    assert name in goldcorrect.__all__
