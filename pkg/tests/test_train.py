import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import toy_digits
from ghn import layers as Ly
from ghn import tensor as T
from ghn import train as Tr
from ghn.data import Dataset

SMALL_ARCH = "cv[1,3,3,4]-pool-fc[10]"


def small_spec(**kw):
    threshold = kw.pop("threshold", Ly.ThresholdConfig())
    layers = Ly.parse_architecture(SMALL_ARCH, threshold=threshold)
    return Ly.NetworkSpec(tuple(layers), (28, 28, 1), init_std=0.03, **kw)


def toy_ds(n, seed):
    images, labels = toy_digits(n, seed)
    return Dataset((images / 255.0).astype(np.float32)[..., None], labels.astype(np.int64))


# -- sgd ------------------------------------------------------------------------

def test_sgd_examples():
    p = T.Parameter([1.0], "w")
    p.grad = np.array([0.5], np.float32)
    Tr.sgd_step([p], 0.1)
    assert p.data[0] == pytest.approx(0.95)
    r = T.Parameter([0.005], "fc0.r")
    r.grad = np.array([1.0], np.float32)
    Tr.sgd_step([r], 0.1)
    assert r.data[0] == 0.0
    hi = T.Parameter(0.99, "cv0.r")
    hi.grad = np.array(-1.0, np.float32)
    Tr.sgd_step([hi], 0.1)
    assert hi.data == 1.0


def test_sgd_zero_rate_and_frozen():
    p = T.Parameter([1.0, 2.0], "w")
    frozen = T.Parameter([3.0], "f", trainable=False)
    p.grad = np.array([5.0, 5.0], np.float32)
    frozen.grad = np.array([5.0], np.float32)
    Tr.sgd_step([p, frozen], 1e-300)  # rounds to 0 in float32
    assert p.data.tolist() == [1.0, 2.0] and frozen.data.tolist() == [3.0]
    with pytest.raises(ValueError):
        Tr.TrainConfig(learning_rate=0)


def test_sgd_errors():
    p = T.Parameter([1.0, 2.0], "w.special")
    p.grad = np.zeros(3, np.float32)
    with pytest.raises(T.ShapeError, match="w.special"):
        Tr.sgd_step([p], 0.1)
    p.grad = np.array([np.nan, 0], np.float32)
    with pytest.raises(FloatingPointError, match="w.special"):
        Tr.sgd_step([p], 0.1)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1.0))
def test_sgd_linear_in_gradient(seed, lr):
    with T.precision("r64"):
        rng = np.random.default_rng(seed)
        base, g1, g2 = rng.normal(size=(3, 4))
        once = T.Parameter(base, "w")
        once.grad = g1 + g2
        Tr.sgd_step([once], lr)
        twice = T.Parameter(base, "w")
        twice.grad = g1
        Tr.sgd_step([twice], lr)
        twice.grad = g2
        Tr.sgd_step([twice], lr)
        np.testing.assert_allclose(once.data, twice.data, atol=1e-6)


# -- pearson --------------------------------------------------------------------

def test_pearson_examples():
    a = [0.3, 1.7, -2.0, 5.5]
    assert Tr.pearson(a, a) == pytest.approx(1.0)
    assert Tr.pearson(a, [-v for v in a]) == pytest.approx(-1.0)
    # oracle: sum(dx*dy) = 4.1, sum(dx^2) = 2, sum(dy^2) = 8.40666..., r = 0.99990
    ref = 4.1 / math.sqrt(2 * (2.0333333333333333 ** 2 + 0.0333333333333333 ** 2 + 2.0666666666666667 ** 2))
    assert Tr.pearson([1, 2, 3], [2, 4, 6.1]) == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(0.99990, abs=1e-5)


def test_pearson_errors():
    with pytest.raises(ValueError, match="constant"):
        Tr.pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        Tr.pearson([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        Tr.pearson([1], [1])


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-100, 100),
       st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariance(seed, s1, o1, s2, o2):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 20))
    b = b + a
    assert Tr.pearson(s1 * a + o1, s2 * b + o2) == pytest.approx(Tr.pearson(a, b), abs=1e-9)


# -- layer stats ----------------------------------------------------------------

def test_record_layer_stats():
    net = Ly.Network(small_spec(), seed=0)
    net.outputs = {"cv0": T.Tensor(np.full((2, 3), 0.5))}
    assert Tr.record_layer_stats(net, "cv0") == (0.5, 0.5, 0.5)
    net.outputs = {"cv0": T.Tensor([[0.0, 1.0], [1.0, 0.0]])}
    assert Tr.record_layer_stats(net, "cv0") == (0.5, 1.0, 0.0)
    rand = np.random.default_rng(0).normal(size=(4, 5, 5, 3)).astype(np.float32)
    net.outputs = {"cv0": T.Tensor(rand)}
    mean, hi, lo = Tr.record_layer_stats(net, "cv0")
    assert mean == pytest.approx(float(rand.astype(np.float64).mean()), abs=1e-12)
    assert (hi, lo) == (rand.max(), rand.min())
    with pytest.raises(KeyError):
        Tr.record_layer_stats(net, "fc9")


# -- evaluate -------------------------------------------------------------------

def test_half_weights_give_first_class_base_rate():
    ds = toy_ds(50, 3)
    net = Ly.Network(small_spec(threshold=Ly.ThresholdConfig(mode="off")), seed=0)
    for layer in net.layers:
        if isinstance(layer, Ly.Weighted):
            layer.param.assign(np.zeros_like(layer.param.data))
    acc, loss = Tr.evaluate(net, ds)
    assert acc == pytest.approx(np.mean(ds.labels == 0))
    assert loss == pytest.approx(math.log(10), abs=1e-5)


def test_accuracy_invariant_under_test_order():
    ds = toy_ds(60, 4)
    net = Ly.Network(small_spec(), seed=2)
    perm = np.random.default_rng(0).permutation(len(ds))
    assert Tr.evaluate(net, ds, 17)[0] == Tr.evaluate(net, ds.subset(perm), 17)[0]


def test_overfits_ten_samples():
    ds = toy_ds(10, 5)
    net = Ly.Network(small_spec(), seed=0)
    cfg = Tr.TrainConfig(learning_rate=0.1, batch_size=10, steps=150, eval_every=0, stats_every=0)
    Tr.train(net, ds, None, cfg)
    assert Tr.evaluate(net, ds)[0] == 1.0


# -- train ------------------------------------------------------------------------

def _run(seed=0, steps=30, **kw):
    net = Ly.Network(small_spec(**kw), seed=seed)
    cfg = Tr.TrainConfig(steps=steps, seed=seed, eval_every=10, stats_every=5)
    return net, Tr.train(net, toy_ds(96, 0), toy_ds(30, 1), cfg)


def test_train_records():
    net, res = _run()
    train_loss = [r for r in res.scalars if r.split == "train"]
    assert [r.step for r in train_loss] == list(range(30))
    assert [r.step for r in res.scalars if r.metric == "accuracy"] == [10, 20, 30]
    assert all(0 <= r.value <= 1 for r in res.scalars if r.metric == "accuracy")
    assert {r.stat for r in res.stats} == {"mean", "max", "min", "r"}
    assert sorted({r.step for r in res.stats}) == list(range(0, 30, 5))
    assert {r.layer for r in res.stats if r.stat == "mean"} == {"cv0"}
    assert res.checkpoint.step == 30
    for name, arr in net.state().items():
        assert res.checkpoint.params[name].tobytes() == arr.tobytes()


def test_train_is_deterministic(tmp_path):
    outputs = []
    for i in range(2):
        _, res = _run(seed=7)
        Tr.write_scalars_csv(res.scalars, tmp_path / f"m{i}.csv")
        Tr.write_stats_csv(res.stats, tmp_path / f"s{i}.csv")
        outputs.append(res)
    assert (tmp_path / "m0.csv").read_bytes() == (tmp_path / "m1.csv").read_bytes()
    assert (tmp_path / "s0.csv").read_bytes() == (tmp_path / "s1.csv").read_bytes()
    assert outputs[0].stream_digest == outputs[1].stream_digest
    other = _run(seed=8)[1]
    assert other.stream_digest != outputs[0].stream_digest


def test_zero_steps_checkpoint_is_initialisation(tmp_path):
    net = Ly.Network(small_spec(), seed=3)
    res = Tr.train(net, toy_ds(20, 0), None, Tr.TrainConfig(steps=0, seed=3))
    Tr.save_checkpoint(res.checkpoint, tmp_path / "c.ghn")
    loaded = Tr.load_checkpoint(tmp_path / "c.ghn")
    fresh = Ly.Network(small_spec(), seed=3).state()
    assert loaded.step == 0
    assert set(loaded.params) == set(fresh)
    for k, v in fresh.items():
        assert loaded.params[k].tobytes() == v.tobytes()


def test_non_finite_loss_aborts_with_step():
    ds = toy_ds(64, 0)
    images = ds.images.copy()
    images[37] = np.nan
    ds = Dataset(images, ds.labels)
    # the poisoned sample's batch within the first epoch
    order = np.random.default_rng([0, 0]).permutation(64)
    expected = int(np.flatnonzero(order == 37)[0]) // 8
    net = Ly.Network(small_spec(), seed=0)
    cfg = Tr.TrainConfig(batch_size=8, steps=8, eval_every=0, stats_every=0)
    with pytest.raises(Tr.TrainingDiverged) as info, np.errstate(all="ignore"):
        Tr.train(net, ds, None, cfg)
    assert info.value.step == expected


# -- csv ---------------------------------------------------------------------------

def test_scalar_csv_round_trip(tmp_path):
    recs = [Tr.ScalarRecord(0, "train", "loss", 2.302585092994046),
            Tr.ScalarRecord(100, "test", "accuracy", 0.9123)]
    Tr.write_scalars_csv(recs, tmp_path / "m.csv")
    text = (tmp_path / "m.csv").read_text()
    assert text.splitlines()[0] == "step,split,metric,value"
    assert Tr.read_scalars_csv(tmp_path / "m.csv") == recs
    Tr.write_stats_csv([Tr.StatRecord(0, "cv0", "mean", 0.5)], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text() == "step,layer,stat,value\n0,cv0,mean,0.5\n"


# -- checkpoints ---------------------------------------------------------------------

def test_checkpoint_round_trip_is_bit_identical(tmp_path):
    net, res = _run(steps=12)
    ds = toy_ds(30, 1)
    before = Tr.evaluate(net, ds)
    Tr.save_checkpoint(res.checkpoint, tmp_path / "c.ghn")
    ckpt = Tr.load_checkpoint(tmp_path / "c.ghn")
    assert ckpt.step == 12 and ckpt.config["learning_rate"] == 0.1
    fresh = Tr.restore(Ly.Network(small_spec(), seed=99), ckpt)
    after = Tr.evaluate(fresh, ds)
    assert before == after
    for name, arr in res.checkpoint.params.items():
        assert ckpt.params[name].dtype == arr.dtype
        assert ckpt.params[name].tobytes() == arr.tobytes()


def test_checkpoint_layout(tmp_path):
    ckpt = Tr.Checkpoint({"a.w": np.arange(6, dtype=np.float32).reshape(2, 3)}, 5, {"k": 1})
    Tr.save_checkpoint(ckpt, tmp_path / "c.ghn")
    raw = (tmp_path / "c.ghn").read_bytes()
    assert raw[:8] == b"GHNCKPT1"
    assert raw[8:16] == (1).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert raw[16:18] == (3).to_bytes(2, "little") and raw[18:21] == b"a.w"
    assert raw[21:23] == bytes([0, 2])
    assert raw[23:31] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert raw[31:55] == np.arange(6, dtype="<f4").tobytes()


def test_checkpoint_errors(tmp_path):
    ckpt = Tr.Checkpoint({"w": np.ones(4, np.float32)}, 1, {})
    path = tmp_path / "c.ghn"
    Tr.save_checkpoint(ckpt, path)
    raw = path.read_bytes()
    for cut in (3, 12, 20, len(raw) - 1):
        path.write_bytes(raw[:cut])
        with pytest.raises(Tr.CheckpointError, match="corrupt length|not a GHN"):
            Tr.load_checkpoint(path)
    path.write_bytes(raw + b"\x00")
    with pytest.raises(Tr.CheckpointError, match="corrupt length"):
        Tr.load_checkpoint(path)
    path.write_bytes(raw[:8] + (2).to_bytes(4, "little") + raw[12:])
    with pytest.raises(Tr.CheckpointError, match="version"):
        Tr.load_checkpoint(path)
    net = Ly.Network(small_spec(), seed=0)
    with pytest.raises(KeyError, match="missing parameter"):
        Tr.restore(net, Tr.Checkpoint({"cv0.u": net.state()["cv0.u"]}))


# -- bn comparison ---------------------------------------------------------------------

def test_self_comparison_correlates_perfectly(tmp_path):
    spec = small_spec()
    cfg = Tr.TrainConfig(steps=40, eval_every=20, stats_every=4)
    report = Tr.compare_bn_experiment(spec, spec, toy_ds(96, 0), toy_ds(30, 1), cfg, arms=("a", "b"))
    assert report.streams_match
    assert report.steps == list(range(0, 40, 4))
    for stat in ("mean", "max", "min"):
        assert report.correlations[stat] == pytest.approx(1.0, abs=1e-12)
    # permutation control: scrambling one series destroys the alignment
    rng = np.random.default_rng(0)
    a = report.series["a"]["mean"]
    shuffled = [abs(Tr.pearson(a, rng.permutation(a))) for _ in range(20)]
    assert np.median(shuffled) < 0.5
    Tr.write_compare_csv(report, tmp_path)
    lines = (tmp_path / "compare_report.csv").read_text().splitlines()
    assert lines[0] == "series,pearson" and lines[1].startswith("mean,")
    assert (tmp_path / "compare_series.csv").read_text().startswith("step,arm,stat,value\n0,a,mean,")


def test_bn_comparison_runs_on_shared_stream():
    spec = small_spec()
    cfg = Tr.TrainConfig(steps=20, eval_every=10, stats_every=5)
    report = Tr.compare_bn_experiment(spec, Ly.with_bias(spec, "batchnorm"), toy_ds(96, 0),
                                      toy_ds(30, 1), cfg)
    assert report.streams_match
    assert set(report.series) == {"ghn", "bn"}
    assert all(-1 <= c <= 1 for c in report.correlations.values())
    assert [s for s, _ in report.accuracy["bn"]] == [10, 20]
