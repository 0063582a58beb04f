"""GHN layers, activations, baselines and the network container.

GHN layers emit the generalized hamming distance ``h`` between each input
patch and each filter; the offset ``mean(x) + mean(w)`` is computed from the
data rather than learned.  Baseline layers use the same orientation
(``-(2/L) x.w``) but with a learned bias or batch normalisation in place of
the analytic offset, so both families feed the same activations and head.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Parameter, ShapeError, Tensor

THRESHOLD_MODES = ("off", "hard", "soft")
GRANULARITIES = ("per_layer", "per_filter")
BIAS_KINDS = ("ghd", "learned", "batchnorm")
ACTIVATIONS = ("threshold", "relu_ghd", "none")
HEADS = ("softmax", "logistic")
PARAMETRIZATIONS = ("centered", "direct")

INIT_STD = 0.03


class CompositionError(ValueError):
    pass


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdConfig:
    mode: str = "soft"
    granularity: str = "per_layer"
    r: float = 0.05
    trainable: bool = True
    steepness: float = 10.0

    def __post_init__(self):
        if self.mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold mode must be one of {THRESHOLD_MODES}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")
        if self.steepness <= 0:
            raise ValueError("steepness must be positive")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "cv", "fc" or "pool"
    out: int = 0
    in_features: int | None = None  # cv: input channels; fc: input width (None = infer)
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    padding: str = "same"
    window: int = 2
    bias: str = "ghd"
    activation: str = "threshold"
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)

    @property
    def weighted(self) -> bool:
        return self.kind in ("cv", "fc")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    head: str = "softmax"
    parametrization: str = "centered"
    init_std: float = INIT_STD

    def weighted_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.weighted]


# ---------------------------------------------------------------- architecture strings

_TOKEN = re.compile(r"^(cv|fc)\[([^\]]*)\]$|^pool$")


def parse_architecture(text: str, nclass: int | None = None,
                       threshold: ThresholdConfig | None = None,
                       conv_threshold: ThresholdConfig | None = None) -> list[LayerSpec]:
    """Parse strings such as ``cv[1,5,5,16]-pool-fc[1024]-fc[1024,10]``.

    ``cv[c_in,kh,kw,c_out]``; ``fc[n]`` (input width inferred) or ``fc[n_in,n_out]``.
    The last weighted layer gets no activation.
    """
    threshold = threshold or ThresholdConfig()
    conv_threshold = conv_threshold or replace(threshold, granularity="per_filter")
    layers: list[LayerSpec] = []
    for pos, tok in enumerate(t.strip() for t in text.strip().split("-")):
        m = _TOKEN.match(tok)
        if not m:
            raise ArchitectureError(f"token {pos} {tok!r}: unknown layer")
        if tok == "pool":
            layers.append(LayerSpec(kind="pool", window=2, stride=2, activation="none"))
            continue
        kind, body = m.group(1), m.group(2)
        args = []
        for a in body.split(","):
            a = a.strip()
            if a == "nclass" and nclass is not None:
                args.append(nclass)
            elif a.isdigit() and int(a) > 0:
                args.append(int(a))
            else:
                raise ArchitectureError(f"token {pos} {tok!r}: bad argument {a!r}")
        if kind == "cv":
            if len(args) != 4:
                raise ArchitectureError(f"token {pos} {tok!r}: cv needs 4 arguments [c_in,kh,kw,c_out]")
            cin, kh, kw, cout = args
            layers.append(LayerSpec(kind="cv", out=cout, in_features=cin, kernel=(kh, kw),
                                    threshold=conv_threshold))
        else:
            if len(args) not in (1, 2):
                raise ArchitectureError(f"token {pos} {tok!r}: fc needs [n_out] or [n_in,n_out]")
            in_f, out = (None, args[0]) if len(args) == 1 else args
            layers.append(LayerSpec(kind="fc", out=out, in_features=in_f, threshold=threshold))
    weighted = [i for i, l in enumerate(layers) if l.weighted]
    if not weighted:
        raise ArchitectureError("architecture has no weighted layer")
    last = weighted[-1]
    layers[last] = replace(layers[last], activation="none")
    return layers


def render_architecture(layers: Sequence[LayerSpec]) -> str:
    parts = []
    for l in layers:
        if l.kind == "pool":
            parts.append("pool")
        elif l.kind == "cv":
            parts.append(f"cv[{l.in_features},{l.kernel[0]},{l.kernel[1]},{l.out}]")
        elif l.in_features is None:
            parts.append(f"fc[{l.out}]")
        else:
            parts.append(f"fc[{l.in_features},{l.out}]")
    return "-".join(parts)


# ---------------------------------------------------------------- functional forms

def ghn_dense_forward(x: Tensor, w: Tensor) -> Tensor:
    """``h[n, f] = mean(x_n) + mean(w_f) - (2/L) x_n . w_f`` for ``w`` of shape [L, F]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"ghn dense: input {x.shape} vs weights {w.shape}")
    L = w.shape[0]
    xbar = T.reduce_mean(x, axes=1, keepdims=True)
    wbar = T.reduce_mean(w, axes=0, keepdims=True)
    return T.add(T.add(xbar, wbar), T.scale(T.matmul(x, w), -2.0 / L))


def patch_mean(x: Tensor, kh: int, kw: int, stride: int, padding: str) -> Tensor:
    """Mean over each ``kh x kw x c`` patch; padded zeros count towards the mean."""
    # summing channels first keeps the im2col buffer one channel wide
    ones = T.constant(np.ones((kh, kw, 1, 1), dtype=x.data.dtype))
    summed = T.reduce_sum(x, axes=3, keepdims=True)
    return T.scale(T.conv2d(summed, ones, stride, padding), 1.0 / (kh * kw * x.shape[3]))


def ghn_conv2d_forward(x: Tensor, k: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    if x.ndim != 4 or k.ndim != 4 or x.shape[3] != k.shape[2]:
        raise ShapeError(f"ghn conv: input {x.shape} vs kernel {k.shape}")
    kh, kw, cin, _ = k.shape
    L = kh * kw * cin
    xbar = patch_mean(x, kh, kw, stride, padding)
    wbar = T.reduce_mean(k, axes=(0, 1, 2))
    return T.add(T.add(xbar, wbar), T.scale(T.conv2d(x, k, stride, padding), -2.0 / L))


def band_magnitude(h: Tensor, granularity: str) -> np.ndarray:
    """``O``: largest ``|h - 0.5|`` in the batch, per output channel if per_filter."""
    d = np.abs(h.data - 0.5)
    if granularity == "per_filter":
        return d.reshape(-1, d.shape[-1]).max(axis=0)
    return np.asarray(d.max(), dtype=h.data.dtype)


def _clamp_unit(r: Tensor) -> Tensor:
    inside = (r.data >= 0) & (r.data <= 1)
    if inside.all():
        return r
    return T.where(inside, r, np.clip(r.data, 0, 1))


def double_threshold(h: Tensor, cfg: ThresholdConfig, r: Tensor | float | None = None,
                     band: np.ndarray | None = None) -> Tensor:
    """Pull outputs within ``r * O`` of 0.5 onto the fixed point 0.5.

    ``band`` overrides ``O`` (which is otherwise measured on ``h`` and held
    constant under differentiation).
    """
    if cfg.mode == "off":
        return h
    if r is None:
        r = cfg.r
    r = _clamp_unit(T.constant(r))
    O = band_magnitude(h, cfg.granularity) if band is None else np.asarray(band, dtype=h.data.dtype)
    d = T.add_constant(h, -0.5)
    if cfg.mode == "hard":
        inside = np.abs(d.data) <= r.data * O
        return T.where(~inside, h, 0.5)
    width = T.mul(r, T.constant(O))
    gate = T.sigmoid(T.scale(T.sub(T.absolute(d), width), cfg.steepness))
    return T.add_constant(T.mul(d, gate), 0.5)


def relu_ghd(h: Tensor) -> Tensor:
    """``max(0, 0.5 - h)``."""
    return T.relu(T.add_constant(T.negate(h), 0.5))


# ---------------------------------------------------------------- modules

class BatchNorm:
    def __init__(self, features: int, name: str, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(features), f"{name}.gamma")
        self.beta = Parameter(np.zeros(features), f"{name}.beta")
        self.running_mean = np.zeros(features, dtype=T.get_dtype())
        self.running_var = np.ones(features, dtype=T.get_dtype())
        self.momentum = momentum
        self.eps = eps

    @property
    def params(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if not training:
            out, _, _ = T.batch_norm(x, self.gamma, self.beta, self.eps,
                                     self.running_mean, self.running_var)
            return out
        if x.size // x.shape[-1] < 2:
            raise ValueError("batch norm in training mode needs at least 2 values per feature")
        out, mean, var = T.batch_norm(x, self.gamma, self.beta, self.eps)
        m = self.momentum
        self.running_mean = (m * self.running_mean + (1 - m) * mean).astype(self.running_mean.dtype)
        self.running_var = (m * self.running_var + (1 - m) * var).astype(self.running_var.dtype)
        return out


def batchnorm_forward(x: Tensor, bn: BatchNorm, training: bool) -> Tensor:
    return bn(x, training)


class Weighted:
    """A cv/fc layer of any bias kind followed by its activation."""

    def __init__(self, spec: LayerSpec, layer_id: str, in_shape: tuple[int, ...],
                 rng: np.random.Generator, parametrization: str = "centered",
                 init_std: float = INIT_STD):
        self.spec = spec
        self.id = layer_id
        if parametrization not in PARAMETRIZATIONS:
            raise CompositionError(f"parametrization must be one of {PARAMETRIZATIONS}")
        self.parametrization = parametrization
        if spec.kind == "cv":
            h, w, cin = in_shape
            if spec.in_features is not None and spec.in_features != cin:
                raise CompositionError(f"expects {spec.in_features} input channels, got {cin}")
            kh, kw = spec.kernel
            wshape = (kh, kw, cin, spec.out)
            oh, ow, _ = T.conv_geometry(h, w, kh, kw, spec.stride, spec.padding)
            self.out_shape = (oh, ow, spec.out)
            self.fan_in = kh * kw * cin
        else:
            width = int(np.prod(in_shape))
            if spec.in_features is not None and spec.in_features != width:
                raise CompositionError(f"expects input width {spec.in_features}, got {width}")
            wshape = (width, spec.out)
            self.out_shape = (spec.out,)
            self.fan_in = width
        if spec.bias not in BIAS_KINDS:
            raise CompositionError(f"unknown bias kind {spec.bias!r}")
        # centered: the trained array u maps to the layer weight w = c - (L/2) u,
        # with c = 0.5 for GHD layers (the fixed point) and 0 for baselines
        suffix = "u" if parametrization == "centered" else "w"
        self.param = Parameter(rng.normal(0.0, init_std, size=wshape), f"{layer_id}.{suffix}")
        self.bias = Parameter(np.zeros(spec.out), f"{layer_id}.b") if spec.bias == "learned" else None
        self.bn = BatchNorm(spec.out, layer_id) if spec.bias == "batchnorm" else None
        self.r = None
        if spec.activation == "threshold" and spec.threshold.mode != "off":
            tc = spec.threshold
            rshape = (spec.out,) if tc.granularity == "per_filter" else ()
            self.r = Parameter(np.full(rshape, tc.r), f"{layer_id}.r",
                               trainable=tc.trainable and tc.mode == "soft")

    def weight(self) -> Tensor:
        """The layer weight ``w`` as it enters the GHD (or baseline) product."""
        if self.parametrization == "direct":
            return self.param
        w = T.scale(self.param, -self.fan_in / 2.0)
        return T.add_constant(w, 0.5) if self.spec.bias == "ghd" else w

    @property
    def params(self) -> list[Parameter]:
        ps = [self.param]
        if self.bias is not None:
            ps.append(self.bias)
        if self.bn is not None:
            ps.extend(self.bn.params)
        if self.r is not None:
            ps.append(self.r)
        return ps

    def _flatten(self, x: Tensor) -> Tensor:
        return T.reshape(x, (x.shape[0], -1)) if x.ndim != 2 else x

    def preactivation(self, x: Tensor, training: bool) -> Tensor:
        s = self.spec
        if s.kind == "fc":
            x = self._flatten(x)
        w = self.weight()
        if s.bias == "ghd":
            if s.kind == "cv":
                return ghn_conv2d_forward(x, w, s.stride, s.padding)
            return ghn_dense_forward(x, w)
        if s.kind == "cv":
            lin = T.conv2d(x, w, s.stride, s.padding)
        else:
            lin = T.matmul(x, w)
        lin = T.scale(lin, -2.0 / self.fan_in)
        if self.bn is not None:
            return self.bn(lin, training)
        return T.add(lin, self.bias)

    def activate(self, h: Tensor) -> Tensor:
        s = self.spec
        if s.activation == "relu_ghd":
            return relu_ghd(h)
        if s.activation == "threshold" and self.r is not None:
            return double_threshold(h, s.threshold, self.r)
        return h


class Pool:
    def __init__(self, spec: LayerSpec, layer_id: str, in_shape: tuple[int, ...]):
        if len(in_shape) != 3:
            raise CompositionError("pool needs a spatial input")
        h, w, c = in_shape
        if spec.window > h or spec.window > w:
            raise CompositionError(f"pool window {spec.window} larger than {h}x{w}")
        self.spec = spec
        self.id = layer_id
        self.out_shape = ((h - spec.window) // spec.stride + 1,
                          (w - spec.window) // spec.stride + 1, c)
        self.params: list[Parameter] = []

    def __call__(self, x: Tensor) -> Tensor:
        return T.maxpool2d(x, self.spec.window, self.spec.stride)


class Network:
    """Runtime network built from a :class:`NetworkSpec` with seeded weights."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        if spec.head not in HEADS:
            raise CompositionError(f"head must be one of {HEADS}")
        self.spec = spec
        rng = np.random.default_rng(seed)
        shape: tuple[int, ...] = tuple(spec.input_shape)
        self.layers: list[Weighted | Pool] = []
        for i, ls in enumerate(spec.layers):
            lid = f"{ls.kind}{i}"
            try:
                if ls.kind == "pool":
                    layer = Pool(ls, lid, shape)
                elif ls.kind == "cv" and len(shape) != 3:
                    raise CompositionError("convolution after a flattened layer")
                else:
                    layer = Weighted(ls, lid, shape, rng, spec.parametrization, spec.init_std)
            except (CompositionError, ShapeError) as exc:
                raise CompositionError(f"layer {i} ({ls.kind}): {exc}") from None
            self.layers.append(layer)
            shape = layer.out_shape
        if not isinstance(self.layers[-1], Weighted) or len(shape) != 1:
            raise CompositionError("the network must end in an fc layer")
        self.num_classes = shape[0]
        self.outputs: dict[str, Tensor] = {}

    @property
    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def trainable_params(self) -> list[Parameter]:
        return [p for p in self.params if p.trainable]

    @property
    def layer_ids(self) -> list[str]:
        return [l.id for l in self.layers if isinstance(l, Weighted)]

    def threshold_params(self) -> list[Parameter]:
        return [l.r for l in self.layers if isinstance(l, Weighted) and l.r is not None]

    def forward(self, x, training: bool = True) -> Tensor:
        """Logits ``-h`` of the final layer; each weighted layer's ``h`` is kept in ``outputs``."""
        x = T.constant(x)
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise CompositionError(f"input shape {x.shape[1:]} != {tuple(self.spec.input_shape)}")
        self.outputs = {}
        for layer in self.layers:
            if isinstance(layer, Pool):
                x = layer(x)
                continue
            h = layer.preactivation(x, training)
            self.outputs[layer.id] = h
            x = layer.activate(h)
        return T.negate(x)

    def loss(self, logits: Tensor, labels) -> Tensor:
        if self.spec.head == "softmax":
            return T.softmax_cross_entropy(logits, labels)
        # membership head: mu(-h) = sigmoid(-h - 0.5)
        return T.sigmoid_cross_entropy(T.add_constant(logits, -0.5), labels)

    def state(self) -> dict[str, np.ndarray]:
        """Every named array needed to restore the network, running statistics included."""
        out = {p.name: p.data for p in self.params}
        for layer in self.layers:
            if isinstance(layer, Weighted) and layer.bn is not None:
                out[f"{layer.id}.running_mean"] = layer.bn.running_mean
                out[f"{layer.id}.running_var"] = layer.bn.running_var
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.params}
        for name, p in params.items():
            if name not in state:
                raise KeyError(f"missing parameter {name!r}")
            p.assign(state[name])
        for layer in self.layers:
            if isinstance(layer, Weighted) and layer.bn is not None:
                for attr in ("running_mean", "running_var"):
                    key = f"{layer.id}.{attr}"
                    if key not in state:
                        raise KeyError(f"missing parameter {key!r}")
                    setattr(layer.bn, attr, np.array(state[key], dtype=getattr(layer.bn, attr).dtype))


def network_forward(net: Network, batch, training: bool = True) -> Tensor:
    return net.forward(batch, training)


MNIST_ARCH = "cv[1,5,5,16]-pool-cv[16,5,5,64]-pool-fc[1024]-fc[1024,10]"
# "...-fc[1024,512]-fc[1024,nclass]" does not compose; the last fc takes 512 inputs
CIFAR_ARCH = "cv[3,3,3,64]-cv[64,5,5,256]-pool-cv[256,5,5,256]-pool-fc[1024]-fc[1024,512]-fc[512,nclass]"


def mnist_spec(**kw) -> NetworkSpec:
    head = kw.pop("head", "softmax")
    return NetworkSpec(tuple(parse_architecture(MNIST_ARCH, **kw)), (28, 28, 1), head)


def cifar_spec(nclass: int = 10, **kw) -> NetworkSpec:
    head = kw.pop("head", "softmax")
    return NetworkSpec(tuple(parse_architecture(CIFAR_ARCH, nclass=nclass, **kw)), (32, 32, 3), head)


def with_bias(spec: NetworkSpec, bias: str, final_bias: str = "learned") -> NetworkSpec:
    """Same geometry with every weighted layer switched to ``bias`` (the last to ``final_bias``)."""
    idx = spec.weighted_indices()
    layers = list(spec.layers)
    for i in idx:
        layers[i] = replace(layers[i], bias=final_bias if i == idx[-1] else bias)
    return replace(spec, layers=tuple(layers))
