import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import cifar_records, write_idx, write_mnist
from ghn import data as D


def test_mnist_round_trip(tmp_path):
    images = np.zeros((3, 28, 28), np.uint8)
    images[0, 0, 0] = 255
    images[1, 5, 7] = 128
    labels = [7, 0, 9]
    ds = D.load_mnist_idx(*write_mnist(tmp_path, images, labels))
    assert ds.images.shape == (3, 28, 28, 1)
    assert ds.images.dtype == np.float32
    assert ds.images[0, 0, 0, 0] == 1.0 and ds.images[2].max() == 0.0
    assert ds.images[1, 5, 7, 0] == pytest.approx(128 / 255)
    assert ds.labels.tolist() == labels


def test_mnist_errors_are_distinct(tmp_path):
    img, lab = write_mnist(tmp_path, np.zeros((4, 28, 28)), [1, 2, 3, 4])
    with pytest.raises(D.WrongMagicError):
        D.load_mnist_idx(img, img)
    with pytest.raises(D.WrongMagicError):
        D.load_mnist_idx(lab, lab)
    short = tmp_path / "short"
    short.write_bytes(img.read_bytes()[:-10])
    with pytest.raises(D.TruncatedFileError):
        D.load_mnist_idx(short, lab)
    (tmp_path / "stub").write_bytes(b"\x00\x00")
    with pytest.raises(D.TruncatedFileError):
        D.load_mnist_idx(tmp_path / "stub", lab)
    few = tmp_path / "few"
    write_idx(few, [1, 2, 3], 2049)
    with pytest.raises(D.CountMismatchError):
        D.load_mnist_idx(img, few)
    bad = tmp_path / "bad"
    write_idx(bad, [1, 2, 3, 12], 2049)
    with pytest.raises(D.DataFormatError):
        D.load_mnist_idx(img, bad)


def test_cifar_channel_order(tmp_path):
    planes = np.zeros((2, 3, 32, 32), np.uint8)
    planes[0, 0] = 255  # red
    planes[1, 2, 3, 5] = 51  # one blue pixel at row 3, col 5
    path = tmp_path / "data_batch_1.bin"
    path.write_bytes(cifar_records([3, 8], planes))
    ds = D.load_cifar10([path])
    assert ds.images.shape == (2, 32, 32, 3)
    assert np.all(ds.images[0, ..., 0] == 1) and np.all(ds.images[0, ..., 1:] == 0)
    assert ds.images[1, 3, 5, 2] == pytest.approx(0.2)
    assert ds.images[1].sum() == pytest.approx(0.2)
    assert ds.labels.tolist() == [3, 8]


def test_cifar_errors(tmp_path):
    short = tmp_path / "short.bin"
    short.write_bytes(bytes(3072))
    with pytest.raises(D.TruncatedFileError):
        D.load_cifar10([short])
    bad = tmp_path / "bad.bin"
    bad.write_bytes(cifar_records([10], np.zeros((1, 3, 32, 32))))
    with pytest.raises(D.DataFormatError):
        D.load_cifar10([bad])
    with pytest.raises(D.DataFormatError):
        D.load_cifar10([])


def test_cifar_concatenates_files(tmp_path):
    paths = []
    for i in range(2):
        p = tmp_path / f"data_batch_{i + 1}.bin"
        p.write_bytes(cifar_records([i, i, i], np.full((3, 3, 32, 32), i)))
        paths.append(p)
    assert D.load_cifar10(paths).labels.tolist() == [0, 0, 0, 1, 1, 1]


def test_locate_and_load_split(tmp_path):
    write_mnist(tmp_path / "mnist", np.zeros((2, 28, 28)), [0, 1], "test")
    assert D.locate_mnist(tmp_path, "test") is not None
    assert D.locate_mnist(tmp_path, "train") is None
    assert len(D.load_split("mnist", tmp_path, "test")) == 2
    with pytest.raises(FileNotFoundError):
        D.load_split("mnist", tmp_path, "train")
    with pytest.raises(FileNotFoundError):
        D.load_split("cifar10", tmp_path, "test")
    with pytest.raises(ValueError):
        D.load_split("svhn", tmp_path, "test")


def test_loader_is_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    paths = write_mnist(tmp_path, rng.integers(0, 256, (5, 28, 28)), rng.integers(0, 10, 5))
    a, b = D.load_mnist_idx(*paths), D.load_mnist_idx(*paths)
    assert a.images.tobytes() == b.images.tobytes()


def _ds(n, seed=0):
    rng = np.random.default_rng(seed)
    return D.Dataset(rng.uniform(0, 1, (n, 2, 2, 1)).astype(np.float32), rng.integers(0, 10, n))


def test_batch_partition_sizes():
    assert [len(b.labels) for b in D.batch_iter(_ds(10), 4)] == [4, 4, 2]
    assert [len(b.labels) for b in D.batch_iter(_ds(3), 8)] == [3]
    with pytest.raises(ValueError):
        list(D.batch_iter(_ds(3), 0))


def test_batch_determinism_and_order():
    ds = _ds(20)
    a = [b.labels.tolist() for b in D.batch_iter(ds, 6, seed=3)]
    b = [b.labels.tolist() for b in D.batch_iter(ds, 6, seed=3)]
    assert a == b
    c = [b.labels.tolist() for b in D.batch_iter(ds, 6, seed=3, epoch=1)]
    assert a != c
    plain = np.concatenate([b.images for b in D.batch_iter(ds, 6, shuffle=False)])
    np.testing.assert_array_equal(plain, ds.images)


@given(st.integers(1, 60), st.integers(1, 17), st.integers(0, 2**31), st.integers(0, 5))
def test_epoch_covers_every_example_once(n, batch, seed, epoch):
    ds = _ds(n, seed % 1000)
    batches = list(D.batch_iter(ds, batch, seed=seed, epoch=epoch))
    labels = np.concatenate([b.labels for b in batches])
    pixels = np.concatenate([b.images for b in batches])
    assert sorted(labels.tolist()) == sorted(ds.labels.tolist())
    assert pixels.sum(dtype=np.float64) == pytest.approx(ds.images.sum(dtype=np.float64), abs=1e-3)
    assert all(len(b.labels) <= batch for b in batches)


def test_stream_reshuffles_each_epoch():
    ds = _ds(8)
    stream = D.batch_stream(ds, 8, seed=1)
    first, second = next(stream).labels, next(stream).labels
    assert sorted(first) == sorted(second)
    assert first.tolist() == next(D.batch_iter(ds, 8, seed=1, epoch=0)).labels.tolist()
    assert second.tolist() == next(D.batch_iter(ds, 8, seed=1, epoch=1)).labels.tolist()


def test_dataset_invariants():
    with pytest.raises(D.CountMismatchError):
        D.Dataset(np.zeros((2, 1, 1, 1)), np.zeros(3, int))
    sub = _ds(10).subset([1, 3])
    assert len(sub) == 2
