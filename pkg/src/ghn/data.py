"""MNIST IDX and CIFAR-10 binary loaders plus deterministic mini-batching."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
CIFAR_RECORD = 1 + 32 * 32 * 3


class DataFormatError(ValueError):
    pass


class WrongMagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # [n, h, w, c], float in [0, 1]
    labels: np.ndarray  # [n], int64
    name: str = ""
    num_classes: int = 10

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatchError(f"{len(self.images)} images vs {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx], self.name, self.num_classes)


@dataclass
class Batch:
    images: np.ndarray
    labels: np.ndarray


def _read_idx(path: Path, magic: int, ndims: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = 4 * (ndims + 1)
    if len(raw) < 8:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise WrongMagicError(f"{path}: magic {found}, expected {magic}")
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    dims = struct.unpack(f">{ndims}I", raw[4:header])
    need = int(np.prod(dims))
    if len(raw) - header < need:
        raise TruncatedFileError(f"{path}: {len(raw) - header} payload bytes, header promises {need}")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=header).reshape(dims)


def load_mnist_idx(images_path, labels_path, name: str = "mnist") -> Dataset:
    pixels = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(pixels) != len(labels):
        raise CountMismatchError(f"{len(pixels)} images vs {len(labels)} labels")
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"{labels_path}: label {labels.max()} out of range")
    images = (pixels.astype(np.float32) / 255.0)[..., None]
    return Dataset(images, labels.astype(np.int64), name)


def load_cifar10(paths: Sequence[str | os.PathLike], name: str = "cifar10") -> Dataset:
    images, labels = [], []
    for path in paths:
        raw = Path(path).read_bytes()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD:
            raise TruncatedFileError(f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        lab = rec[:, 0]
        if lab.max() > 9:
            raise DataFormatError(f"{path}: label byte {lab.max()} > 9")
        planes = rec[:, 1:].reshape(-1, 3, 32, 32)
        images.append(planes.transpose(0, 2, 3, 1))
        labels.append(lab)
    if not images:
        raise DataFormatError("no CIFAR-10 batch files given")
    pix = np.concatenate(images).astype(np.float32) / 255.0
    return Dataset(pix, np.concatenate(labels).astype(np.int64), name)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}


def _find(root: Path, fname: str) -> Path | None:
    for cand in (root / fname, root / "mnist" / fname, root / "cifar-10-batches-bin" / fname):
        if cand.exists():
            return cand
    return None


def locate_mnist(data_dir, split: str) -> tuple[Path, Path] | None:
    root = Path(data_dir)
    found = [_find(root, f) for f in MNIST_FILES[split]]
    return None if None in found else tuple(found)  # type: ignore[return-value]


def locate_cifar10(data_dir, split: str) -> list[Path] | None:
    root = Path(data_dir)
    found = [_find(root, f) for f in CIFAR_FILES[split]]
    return None if None in found else found  # type: ignore[return-value]


def load_split(kind: str, data_dir, split: str) -> Dataset:
    if kind == "mnist":
        paths = locate_mnist(data_dir, split)
        if paths is None:
            raise FileNotFoundError(f"MNIST {split} files not found under {data_dir}")
        return load_mnist_idx(*paths, name=f"mnist-{split}")
    if kind == "cifar10":
        paths = locate_cifar10(data_dir, split)
        if paths is None:
            raise FileNotFoundError(f"CIFAR-10 {split} files not found under {data_dir}")
        return load_cifar10(paths, name=f"cifar10-{split}")
    raise ValueError(f"unknown dataset kind {kind!r}")


def epoch_order(n: int, shuffle: bool, seed: int, epoch: int) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def batch_iter(ds: Dataset, batch_size: int, shuffle: bool = True, seed: int = 0,
               epoch: int = 0) -> Iterator[Batch]:
    """One epoch of batches; the permutation depends only on (seed, epoch)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = epoch_order(len(ds), shuffle, seed, epoch)
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield Batch(ds.images[idx], ds.labels[idx])


def batch_stream(ds: Dataset, batch_size: int, seed: int = 0, shuffle: bool = True) -> Iterator[Batch]:
    """Endless stream of batches, reshuffling at each epoch boundary."""
    epoch = 0
    while True:
        yield from batch_iter(ds, batch_size, shuffle, seed, epoch)
        epoch += 1
