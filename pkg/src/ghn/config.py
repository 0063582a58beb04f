"""Run configuration files.

Line-based format::

    # comment
    [network]
    architecture = cv[1,5,5,16]-pool-cv[16,5,5,64]-pool-fc[1024]-fc[1024,10]
    threshold.mode = soft

    [layer.2]            # overrides for the token at position 2
    threshold.r = 0.1

    [train]
    learning_rate = 0.1

    [data]
    kind = mnist

    [output]
    dir = runs/mnist
"""
from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import locate_cifar10, locate_mnist
from .layers import (ACTIVATIONS, BIAS_KINDS, GRANULARITIES, HEADS, INIT_STD, PARAMETRIZATIONS,
                     THRESHOLD_MODES, ArchitectureError, LayerSpec, NetworkSpec, ThresholdConfig,
                     parse_architecture)
from .train import TrainConfig

DATA_KINDS = {"mnist": (28, 28, 1), "cifar10": (32, 32, 3)}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass
class LayerOverride:
    activation: str | None = None
    bias: str | None = None
    threshold: dict[str, str] = field(default_factory=dict)


@dataclass
class NetworkConfig:
    architecture: str
    head: str = "softmax"
    bias: str = "ghd"
    final_bias: str | None = None  # None: same as bias, "learned" for batchnorm
    activation: str = "threshold"
    parametrization: str = "centered"
    init_std: float = INIT_STD
    threshold: dict[str, str] = field(default_factory=dict)
    layers: dict[int, LayerOverride] = field(default_factory=dict)


@dataclass
class DataConfig:
    kind: str = "mnist"
    dir: str | None = None
    train_limit: int | None = None
    test_limit: int | None = None


@dataclass
class RunConfig:
    network: NetworkConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    out_dir: str = "runs"

    def validate(self) -> None:
        """Check that referenced paths exist; raises ConfigError."""
        if self.data.dir is None:
            raise ConfigError("no data directory (set [data] dir, --data-dir or GHN_DATA_DIR)")
        root = Path(self.data.dir)
        if not root.is_dir():
            raise ConfigError(f"data directory {root} does not exist")
        locate = locate_mnist if self.data.kind == "mnist" else locate_cifar10
        for split in ("train", "test"):
            if locate(root, split) is None:
                raise ConfigError(f"{self.data.kind} {split} files not found under {root}")


_THRESHOLD_KEYS = {"mode", "granularity", "r", "trainable", "steepness"}
_NETWORK_KEYS = {"architecture", "head", "bias", "final_bias", "activation", "parametrization",
                 "init_std"}
_LAYER_KEYS = {"activation", "bias"}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_DATA_KEYS = {"kind", "dir", "train_limit", "test_limit"}
_SECTION = re.compile(r"^\[([a-z]+)(?:\.(\d+))?\]$")


def _bool(text: str, line: int) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}", line)


def _threshold_value(key: str, value: str, line: int) -> str:
    try:
        if key == "mode" and value not in THRESHOLD_MODES:
            raise ValueError(f"threshold.mode must be one of {THRESHOLD_MODES}")
        if key == "granularity" and value not in GRANULARITIES:
            raise ValueError(f"threshold.granularity must be one of {GRANULARITIES}")
        if key in ("r", "steepness"):
            float(value)
        if key == "trainable":
            _bool(value, line)
    except ValueError as exc:
        raise ConfigError(str(exc), line) from None
    return value


def _choice(value: str, options, key: str, line: int) -> str:
    if value not in options:
        raise ConfigError(f"{key} must be one of {tuple(options)}, got {value!r}", line)
    return value


def _train_value(key: str, value: str, line: int):
    ftype = {f.name: f.type for f in dataclasses.fields(TrainConfig)}[key]
    try:
        if key == "stats_layers":
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if key == "precision":
            return _choice(value, ("r32", "r64"), key, line)
        if "float" in str(ftype):
            return float(value)
        return int(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {key}", line) from None


def parse_config(text: str) -> RunConfig:
    section: str | None = None
    layer_idx: int | None = None
    net: dict = {"threshold": {}, "layers": {}}
    train: dict = {}
    data: dict = {}
    out_dir = "runs"
    arch_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section, idx = m.group(1), m.group(2)
            if section == "layer" and idx is not None:
                layer_idx = int(idx)
                net["layers"].setdefault(layer_idx, LayerOverride())
            elif section in ("network", "train", "data", "output") and idx is None:
                layer_idx = None
            else:
                raise ConfigError(f"unknown section {line}", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if section is None:
            raise ConfigError(f"key {key!r} outside any section", lineno)
        if key.startswith("threshold.") and section in ("network", "layer"):
            sub = key.split(".", 1)[1]
            if sub not in _THRESHOLD_KEYS:
                raise ConfigError(f"unknown key {key!r}", lineno)
            target = net["threshold"] if section == "network" else net["layers"][layer_idx].threshold
            target[sub] = _threshold_value(sub, value, lineno)
        elif section == "network":
            if key not in _NETWORK_KEYS:
                raise ConfigError(f"unknown key {key!r} in [network]", lineno)
            if key == "architecture":
                arch_line = lineno
                net[key] = value
            elif key == "init_std":
                try:
                    net[key] = float(value)
                except ValueError:
                    raise ConfigError(f"bad init_std {value!r}", lineno) from None
            else:
                options = {"head": HEADS, "bias": BIAS_KINDS, "final_bias": BIAS_KINDS,
                           "activation": ACTIVATIONS, "parametrization": PARAMETRIZATIONS}[key]
                net[key] = _choice(value, options, key, lineno)
        elif section == "layer":
            if key not in _LAYER_KEYS:
                raise ConfigError(f"unknown key {key!r} in [layer.{layer_idx}]", lineno)
            options = ACTIVATIONS if key == "activation" else BIAS_KINDS
            setattr(net["layers"][layer_idx], key, _choice(value, options, key, lineno))
        elif section == "train":
            if key not in _TRAIN_KEYS:
                raise ConfigError(f"unknown key {key!r} in [train]", lineno)
            train[key] = _train_value(key, value, lineno)
        elif section == "data":
            if key not in _DATA_KEYS:
                raise ConfigError(f"unknown key {key!r} in [data]", lineno)
            if key == "kind":
                data[key] = _choice(value, tuple(DATA_KINDS), key, lineno)
            elif key == "dir":
                data[key] = value
            else:
                try:
                    data[key] = int(value)
                except ValueError:
                    raise ConfigError(f"bad integer {value!r} for {key}", lineno) from None
        elif section == "output":
            if key != "dir":
                raise ConfigError(f"unknown key {key!r} in [output]", lineno)
            out_dir = value
    if "architecture" not in net:
        raise ConfigError("[network] architecture is required")
    cfg = RunConfig(NetworkConfig(**net), TrainConfig(**train), DataConfig(**data), out_dir)
    try:
        build_spec(cfg)
    except ArchitectureError as exc:
        raise ConfigError(str(exc), arch_line) from None
    return cfg


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def render_config(cfg: RunConfig) -> str:
    n = cfg.network
    lines = ["[network]", f"architecture = {n.architecture}", f"head = {n.head}",
             f"bias = {n.bias}"]
    if n.final_bias is not None:
        lines.append(f"final_bias = {n.final_bias}")
    lines += [f"activation = {n.activation}", f"parametrization = {n.parametrization}",
              f"init_std = {n.init_std!r}"]
    lines += [f"threshold.{k} = {v}" for k, v in n.threshold.items()]
    for idx in sorted(n.layers):
        o = n.layers[idx]
        lines += ["", f"[layer.{idx}]"]
        if o.activation is not None:
            lines.append(f"activation = {o.activation}")
        if o.bias is not None:
            lines.append(f"bias = {o.bias}")
        lines += [f"threshold.{k} = {v}" for k, v in o.threshold.items()]
    lines += ["", "[train]"]
    for f in dataclasses.fields(TrainConfig):
        v = getattr(cfg.train, f.name)
        if f.name == "stats_layers" and not v:
            continue
        lines.append(f"{f.name} = {_fmt(v)}")
    lines += ["", "[data]", f"kind = {cfg.data.kind}"]
    for key in ("dir", "train_limit", "test_limit"):
        v = getattr(cfg.data, key)
        if v is not None:
            lines.append(f"{key} = {v}")
    lines += ["", "[output]", f"dir = {cfg.out_dir}", ""]
    return "\n".join(lines)


def _threshold(base: dict[str, str], over: dict[str, str], conv: bool) -> ThresholdConfig:
    merged = {**base, **over}
    gran = merged.get("granularity", "per_filter" if conv else "per_layer")
    return ThresholdConfig(
        mode=merged.get("mode", "soft"),
        granularity=gran,
        r=float(merged.get("r", 0.05)),
        trainable=_bool(merged.get("trainable", "true"), None),
        steepness=float(merged.get("steepness", 10.0)),
    )


def build_spec(cfg: RunConfig) -> NetworkSpec:
    """Turn the [network]/[layer.N] sections into a NetworkSpec."""
    n = cfg.network
    input_shape = DATA_KINDS[cfg.data.kind]
    layers = parse_architecture(n.architecture, nclass=10)
    for idx in n.layers:
        if idx >= len(layers):
            raise ArchitectureError(f"[layer.{idx}] refers past the last layer ({len(layers) - 1})")
    weighted = [i for i, l in enumerate(layers) if l.weighted]
    final_bias = n.final_bias or ("learned" if n.bias == "batchnorm" else n.bias)
    out: list[LayerSpec] = []
    for i, l in enumerate(layers):
        if not l.weighted:
            out.append(l)
            continue
        o = n.layers.get(i, LayerOverride())
        last = i == weighted[-1]
        activation = o.activation or ("none" if last else n.activation)
        bias = o.bias or (final_bias if last else n.bias)
        out.append(replace(l, activation=activation, bias=bias,
                           threshold=_threshold(n.threshold, o.threshold, l.kind == "cv")))
    return NetworkSpec(tuple(out), input_shape, n.head, n.parametrization, n.init_std)


def resolve_data_dir(cfg: RunConfig, flag: str | None) -> None:
    """Flags beat the file, which beats the GHN_DATA_DIR environment variable."""
    if flag is not None:
        cfg.data.dir = flag
    elif cfg.data.dir is None:
        cfg.data.dir = os.environ.get("GHN_DATA_DIR")


PRESET_DIR = Path(__file__).parent / "presets"


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))


def load_config(path_or_preset: str) -> RunConfig:
    path = Path(path_or_preset)
    if not path.exists():
        cand = PRESET_DIR / f"{path_or_preset.removesuffix('.cfg')}.cfg"
        if not cand.exists():
            raise ConfigError(f"no config file or preset named {path_or_preset!r}; "
                              f"presets: {', '.join(preset_names())}")
        path = cand
    return parse_config(path.read_text(encoding="utf-8"))
