import os
from pathlib import Path

import pytest

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def mnist_paths():
    directory = Path(os.environ["GOLDCORRECT_MNIST_DIR"])
    return {key: str(directory / name) for key, name in MNIST_FILES.items()}


def skip_without_mnist(function):
    return pytest.mark.skipif(
        not os.environ.get("GOLDCORRECT_MNIST_DIR"),
        reason="MNIST runs are skipped by default. Enable them by setting "
        "GOLDCORRECT_MNIST_DIR to the directory holding the four IDX files",
    )(function)
