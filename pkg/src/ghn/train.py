"""SGD training loop, evaluation, layer statistics and the BN-vs-GHD comparison."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as T
from .data import Batch, Dataset, batch_iter, batch_stream
from .layers import Network, NetworkSpec

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


class CheckpointError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 64
    steps: int = 1000
    seed: int = 0
    eval_every: int = 100
    stats_every: int = 50
    stats_layers: tuple[str, ...] = ()  # empty: the first weighted layer
    precision: str = "r32"
    eval_batch_size: int = 100

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


@dataclass(frozen=True)
class ScalarRecord:
    step: int
    split: str
    metric: str
    value: float


@dataclass(frozen=True)
class StatRecord:
    step: int
    layer: str
    stat: str
    value: float


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    step: int = 0
    config: dict = field(default_factory=dict)
    version: int = 1


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    scalars: list[ScalarRecord]
    stats: list[StatRecord]
    stream_digest: str


# ---------------------------------------------------------------- optimisation

def sgd_step(params: Iterable[T.Parameter], lr: float) -> None:
    """``p <- p - lr * grad`` for trainable parameters; threshold ratios clamped to [0, 1]."""
    for p in params:
        if not p.trainable or p.grad is None:
            continue
        g = p.grad
        if g.shape != p.shape:
            raise T.ShapeError(f"{p.name}: gradient shape {g.shape} != {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {p.name}")
        new = p.data - p.data.dtype.type(lr) * g
        if is_threshold_ratio(p):
            new = np.clip(new, 0.0, 1.0)
        p.assign(new)


def is_threshold_ratio(p: T.Parameter) -> bool:
    return p.name.endswith(".r")


def predict(net: Network, images: np.ndarray) -> np.ndarray:
    with T.no_grad():
        return net.forward(images, training=False).data.argmax(axis=1)


def evaluate(net: Network, ds: Dataset, batch_size: int = 100) -> tuple[float, float]:
    """(accuracy, mean loss) over the whole dataset in evaluation mode."""
    correct = 0
    loss_sum = 0.0
    for b in batch_iter(ds, batch_size, shuffle=False):
        with T.no_grad():
            logits = net.forward(b.images, training=False)
            loss = net.loss(logits, b.labels)
        correct += int((logits.data.argmax(axis=1) == b.labels).sum())
        loss_sum += float(loss.data) * len(b.labels)
    n = len(ds)
    return correct / n, loss_sum / n


def record_layer_stats(net: Network, layer_id: str) -> tuple[float, float, float]:
    """(mean, max, min) of a layer's output for the most recent forward pass."""
    if layer_id not in net.outputs:
        raise KeyError(f"unknown layer {layer_id!r}; have {sorted(net.outputs)}")
    d = net.outputs[layer_id].data
    return float(d.mean(dtype=np.float64)), float(d.max()), float(d.min())


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson needs two equal-length series of length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(dx @ dx)), math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        raise ValueError("correlation undefined for a constant series")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def _batch_digest(h: "hashlib._Hash", b: Batch) -> None:
    h.update(np.ascontiguousarray(b.labels).tobytes())
    h.update(np.ascontiguousarray(b.images).tobytes())


def train(net: Network, ds_train: Dataset, ds_test: Dataset | None, cfg: TrainConfig,
          on_record: Callable[[ScalarRecord | StatRecord], None] | None = None) -> TrainResult:
    """Plain constant-rate SGD for ``cfg.steps`` mini-batches.

    Train loss is recorded every step, test accuracy/loss every ``eval_every``
    steps and after the last step, and layer statistics every ``stats_every``.
    """
    scalars: list[ScalarRecord] = []
    stats: list[StatRecord] = []
    stat_layers = list(cfg.stats_layers) or net.layer_ids[:1]
    digest = hashlib.sha256()

    def emit(rec):
        (scalars if isinstance(rec, ScalarRecord) else stats).append(rec)
        if on_record is not None:
            on_record(rec)

    def test_point(step):
        if ds_test is None:
            return
        acc, loss = evaluate(net, ds_test, cfg.eval_batch_size)
        emit(ScalarRecord(step, "test", "accuracy", acc))
        emit(ScalarRecord(step, "test", "loss", loss))
        log.info("step %d test accuracy %.4f loss %.4f", step, acc, loss)

    stream = batch_stream(ds_train, cfg.batch_size, seed=cfg.seed)
    params = net.trainable_params
    last_eval = -1
    for step in range(cfg.steps):
        b = next(stream)
        _batch_digest(digest, b)
        logits = net.forward(b.images, training=True)
        loss = net.loss(logits, b.labels)
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingDiverged(step, value)
        if cfg.stats_every and step % cfg.stats_every == 0:
            for lid in stat_layers:
                for name, v in zip(("mean", "max", "min"), record_layer_stats(net, lid)):
                    emit(StatRecord(step, lid, name, v))
            for layer in net.layers:
                r = getattr(layer, "r", None)
                if r is not None:
                    emit(StatRecord(step, layer.id, "r", float(np.mean(r.data))))
        T.zero_grad(params)
        T.backward(loss)
        sgd_step(params, cfg.learning_rate)
        del logits, loss  # free this step's graph before the next forward
        emit(ScalarRecord(step, "train", "loss", value))
        if cfg.eval_every and (step + 1) % cfg.eval_every == 0:
            test_point(step + 1)
            last_eval = step + 1
    if last_eval != cfg.steps:
        test_point(cfg.steps)
    ckpt = Checkpoint({k: v.copy() for k, v in net.state().items()}, cfg.steps,
                      dataclasses.asdict(cfg))
    return TrainResult(ckpt, scalars, stats, digest.hexdigest())


# ---------------------------------------------------------------- metrics files

def _fmt(v: float) -> str:
    return repr(float(v))


def write_scalars_csv(records: Iterable[ScalarRecord], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "split", "metric", "value"])
        for r in records:
            w.writerow([r.step, r.split, r.metric, _fmt(r.value)])


def write_stats_csv(records: Iterable[StatRecord], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "layer", "stat", "value"])
        for r in records:
            w.writerow([r.step, r.layer, r.stat, _fmt(r.value)])


def read_scalars_csv(path) -> list[ScalarRecord]:
    with open(path, newline="") as f:
        return [ScalarRecord(int(r["step"]), r["split"], r["metric"], float(r["value"]))
                for r in csv.DictReader(f)]


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"GHNCKPT1"
CKPT_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1,
                np.dtype(np.int64): 2, np.dtype(np.uint8): 3}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
_META_STEP = "__meta__.step"
_META_CONFIG = "__meta__.config"


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    entries = dict(ckpt.params)
    entries[_META_STEP] = np.asarray(ckpt.step, dtype=np.int64)
    entries[_META_CONFIG] = np.frombuffer(
        json.dumps(ckpt.config, sort_keys=True).encode(), dtype=np.uint8)
    out = [CKPT_MAGIC, struct.pack("<II", ckpt.version, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw_name = name.encode()
        out.append(struct.pack("<H", len(raw_name)) + raw_name)
        out.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    Path(path).write_bytes(b"".join(out))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: corrupt length (truncated at byte {pos})")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    if take(8) != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a GHN checkpoint")
    version, count = struct.unpack("<II", take(8))
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: version {version}, expected {CKPT_VERSION}")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode()
        code, rank = struct.unpack("<BB", take(2))
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        dt = _CODE_DTYPES[code].newbyteorder("<")
        n = int(np.prod(shape)) if rank else 1
        entries[name] = np.frombuffer(take(n * dt.itemsize), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    if pos != len(raw):
        raise CheckpointError(f"{path}: corrupt length ({len(raw) - pos} trailing bytes)")
    step = int(entries.pop(_META_STEP, np.asarray(0)))
    config_raw = entries.pop(_META_CONFIG, None)
    config = json.loads(config_raw.tobytes().decode()) if config_raw is not None else {}
    return Checkpoint(entries, step, config, version)


def restore(net: Network, ckpt: Checkpoint) -> Network:
    net.load_state(ckpt.params)
    return net


# ---------------------------------------------------------------- BN vs GHD

@dataclass
class CompareReport:
    correlations: dict[str, float]
    steps: list[int]
    series: dict[str, dict[str, list[float]]]  # arm -> stat -> values
    accuracy: dict[str, list[tuple[int, float]]]
    digests: dict[str, str]
    layer: str

    @property
    def streams_match(self) -> bool:
        return len(set(self.digests.values())) == 1


def compare_bn_experiment(ghn_spec: NetworkSpec, other_spec: NetworkSpec, ds_train: Dataset,
                          ds_test: Dataset | None, cfg: TrainConfig,
                          arms: tuple[str, str] = ("ghn", "bn"),
                          layer: str | None = None) -> CompareReport:
    """Train both networks from one seed on one batch stream and correlate layer statistics."""
    series: dict[str, dict[str, list[float]]] = {}
    accuracy: dict[str, list[tuple[int, float]]] = {}
    digests: dict[str, str] = {}
    steps: list[int] = []
    for arm, spec in zip(arms, (ghn_spec, other_spec)):
        net = Network(spec, seed=cfg.seed)
        lid = layer or net.layer_ids[0]
        arm_cfg = dataclasses.replace(cfg, stats_layers=(lid,))
        res = train(net, ds_train, ds_test, arm_cfg)
        digests[arm] = res.stream_digest
        per = {s: [r.value for r in res.stats if r.layer == lid and r.stat == s]
               for s in ("mean", "max", "min")}
        steps = [r.step for r in res.stats if r.layer == lid and r.stat == "mean"]
        series[arm] = per
        accuracy[arm] = [(r.step, r.value) for r in res.scalars
                         if r.split == "test" and r.metric == "accuracy"]
    a, b = arms
    corr = {}
    for s in ("mean", "max", "min"):
        try:
            corr[s] = pearson(series[a][s], series[b][s])
        except ValueError:
            corr[s] = float("nan")
    return CompareReport(corr, steps, series, accuracy, digests, layer or "first")


def write_compare_csv(report: CompareReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arms = list(report.series)
    with open(out / "compare_series.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "arm", "stat", "value"])
        for arm in arms:
            for stat, values in report.series[arm].items():
                for step, v in zip(report.steps, values):
                    w.writerow([step, arm, stat, _fmt(v)])
    with open(out / "compare_accuracy.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "arm", "accuracy"])
        for arm in arms:
            for step, acc in report.accuracy[arm]:
                w.writerow([step, arm, _fmt(acc)])
    with open(out / "compare_report.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["series", "pearson"])
        for stat, c in report.correlations.items():
            w.writerow([stat, _fmt(c)])
