import pytest

from goldcorrect.data import generate_gaussian_blobs, split_trusted
from goldcorrect.model import ModelTemplate
from goldcorrect.optim import TrainConfig


@pytest.fixture
def blobs():
    return generate_gaussian_blobs(k=3, per_class=100, dim=4, separation=8.0, seed=11)


@pytest.fixture
def test_blobs():
    return generate_gaussian_blobs(k=3, per_class=50, dim=4, separation=8.0, seed=12)


@pytest.fixture
def split(blobs):
    return split_trusted(blobs, 0.2, seed=3)


@pytest.fixture
def template():
    return ModelTemplate(hidden_dims=(8,))


@pytest.fixture
def tiny_config():
    return TrainConfig(epochs=3, batch_size=16, learning_rate=0.01, seed=5)
