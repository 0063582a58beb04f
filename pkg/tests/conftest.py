import os
import struct
from pathlib import Path

import numpy as np
import pytest

from ghn import tensor as T


def write_idx(path, array, magic):
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def write_mnist(root, images, labels, split="train"):
    names = {"train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
             "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")}[split]
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_idx(root / names[0], images, 2051)
    write_idx(root / names[1], labels, 2049)
    return root / names[0], root / names[1]


def cifar_records(labels, planes):
    """``planes``: uint8 [n, 3, 32, 32] in R, G, B order."""
    labels = np.asarray(labels, dtype=np.uint8)[:, None]
    return np.concatenate([labels, np.asarray(planes, np.uint8).reshape(len(labels), -1)], 1).tobytes()


def toy_digits(n, seed, classes=10):
    """Class c lights up horizontal band c of a 28x28 image, plus pixel noise."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    images = rng.integers(0, 40, (n, 28, 28))
    for i, c in enumerate(labels):
        images[i, 2 + 2 * c:4 + 2 * c, 4:24] = 255
    return images.astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture
def toy_mnist_dir(tmp_path):
    root = tmp_path / "data"
    write_mnist(root, *toy_digits(128, 0), "train")
    write_mnist(root, *toy_digits(40, 1), "test")
    return root


@pytest.fixture(autouse=True)
def _reset_precision():
    T.set_precision("r32")
    yield
    T.set_precision("r32")


@pytest.fixture(autouse=True)
def _no_data_env(monkeypatch, request):
    if "acceptance" not in request.node.nodeid:
        monkeypatch.delenv("GHN_DATA_DIR", raising=False)
    yield


def env_data_dir():
    return os.environ.get("GHN_DATA_DIR")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
