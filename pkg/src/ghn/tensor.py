"""A small reverse-mode autodiff engine over numpy arrays.

Each operation returns a new :class:`Tensor` holding its parents and a closure
that maps the output gradient to parent gradients.  :func:`backward` orders
the graph reachable from a scalar loss (the tape) and sweeps it in reverse,
accumulating gradients by addition across fan-out.

Layout is channels-last (``[n, h, w, c]``) throughout.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

# "ext" (x87 extended where the platform has it) is only meant for gradient-check references.
_PRECISIONS = {"r32": np.float32, "r64": np.float64, "ext": np.longdouble}
_FLOATS = tuple(np.dtype(t) for t in _PRECISIONS.values())
_dtype: type = np.float32
_check_finite = False
_grad_enabled = True


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def set_precision(name: str) -> None:
    global _dtype
    try:
        _dtype = _PRECISIONS[name]
    except KeyError:
        raise ValueError(f"precision must be one of {sorted(_PRECISIONS)}, got {name!r}") from None


def get_dtype() -> type:
    return _dtype


def precision_name() -> str:
    return next(k for k, v in _PRECISIONS.items() if v == _dtype)


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the default floating type (``"r32"`` or ``"r64"``)."""
    old = _dtype
    set_precision(name)
    try:
        yield
    finally:
        _restore(old)


def _restore(dtype: type) -> None:
    global _dtype
    _dtype = dtype


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph while active so intermediates are freed at once."""
    global _grad_enabled
    old = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = old


@contextlib.contextmanager
def finite_checks(enabled: bool = True) -> Iterator[None]:
    """Verify every forward value is finite while active."""
    global _check_finite
    old = _check_finite
    _check_finite = enabled
    try:
        yield
    finally:
        _check_finite = old


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = "",
                 _parents: tuple["Tensor", ...] = (), _backward=None, op: str = "leaf"):
        if op == "leaf":
            arr = np.array(data, dtype=_dtype)
        else:
            arr = data if data.dtype in _FLOATS else data.astype(_dtype)
        if _check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values produced by {op}")
        arr.flags.writeable = False
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __neg__(self): return negate(self)
    def __matmul__(self, other): return matmul(self, other)


class Parameter(Tensor):
    """A named leaf tensor updated by the optimizer when ``trainable``."""

    __slots__ = ("trainable",)

    def __init__(self, data, name: str, trainable: bool = True):
        arr = np.array(data, dtype=_dtype)
        super().__init__(arr, requires_grad=trainable, name=name)
        self.trainable = trainable

    def assign(self, value: np.ndarray) -> None:
        value = np.array(value, dtype=self.data.dtype)
        if value.shape != self.data.shape:
            raise ShapeError(f"{self.name}: assigned shape {value.shape} != {self.data.shape}")
        value.flags.writeable = False
        self.data = value

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


def constant(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_dtype))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    return Tensor(np.asarray(data), requires_grad=needs, _parents=parents if needs else (),
                  _backward=backward if needs else None, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _node(a.data + b.data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _node(a.data - b.data, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _node(a.data * b.data, (a, b), back, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def add_constant(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _node(a.data + c, (a,), lambda g: (g,), "add_constant")


def negate(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,), "negate")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a: Tensor) -> Tensor:
    """Plain logistic ``1 / (1 + exp(-a))``."""
    s = _sigmoid(a.data)
    return _node(s, (a,), lambda g: (g * s * (1 - s),), "sigmoid")


def logistic(a: Tensor) -> Tensor:
    """Membership logistic ``1 / (1 + exp(0.5 - a))``."""
    s = _sigmoid(a.data - a.data.dtype.type(0.5))
    return _node(s, (a,), lambda g: (g * s * (1 - s),), "logistic")


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return _node(np.abs(a.data), (a,), lambda g: (g * sign,), "abs")


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(a.data.dtype)
    return _node(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def where(mask: np.ndarray, a: Tensor, b) -> Tensor:
    """``a`` where ``mask`` else ``b``; ``mask`` is a constant boolean array."""
    a, b = constant(a), constant(b)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, b.data).astype(a.data.dtype)

    def back(g):
        return (_unbroadcast(np.where(mask, g, 0), a.shape),
                _unbroadcast(np.where(mask, 0, g), b.shape))
    return _node(out, (a, b), back, "where")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _node(out, (a,), lambda g: (g.reshape(src),), "reshape")


# ---------------------------------------------------------------- reductions

def _axes(a: Tensor, axes) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(a.ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -a.ndim <= ax < a.ndim:
            raise ShapeError(f"axis {ax} out of range for rank {a.ndim}")
        out.append(ax % a.ndim)
    return tuple(sorted(set(out)))


def reduce_sum(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    ax = _axes(a, axes)
    out = a.data.sum(axis=ax, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _node(np.asarray(out), (a,), back, "sum")


def reduce_mean(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    ax = _axes(a, axes)
    count = int(np.prod([a.shape[i] for i in ax])) if ax else 1
    out = a.data.mean(axis=ax, keepdims=keepdims) if ax else a.data.copy()

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g / count, a.shape).astype(a.data.dtype),)
    return _node(np.asarray(out, dtype=a.data.dtype), (a,), back, "mean")


def _argmax_mask(x: np.ndarray, ax: tuple[int, ...]) -> np.ndarray:
    """One-hot mask of the first maximal element over ``ax``."""
    keep = [i for i in range(x.ndim) if i not in ax]
    moved = np.transpose(x, keep + list(ax))
    flat = moved.reshape(moved.shape[:len(keep)] + (-1,))
    idx = flat.argmax(axis=-1)
    mask = np.zeros_like(flat)
    np.put_along_axis(mask, idx[..., None], 1, axis=-1)
    mask = mask.reshape(moved.shape)
    return np.transpose(mask, np.argsort(keep + list(ax)))


def reduce_max(a: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    ax = _axes(a, axes)
    if not ax:
        return _node(a.data.copy(), (a,), lambda g: (g,), "max")
    out = a.data.max(axis=ax, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (_argmax_mask(a.data, ax) * g,)
    return _node(np.asarray(out), (a,), back, "max")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")

    def back(g):
        return g @ b.data.T, a.data.T @ g
    return _node(a.data @ b.data, (a, b), back, "matmul")


def same_padding(size: int, k: int, stride: int) -> tuple[int, int, int]:
    """Output extent and (before, after) zero padding for ``same`` geometry."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


def conv_geometry(h: int, w: int, kh: int, kw: int, stride: int, padding: str):
    if stride < 1:
        raise ShapeError("stride must be >= 1")
    if padding == "same":
        oh, pt, pb = same_padding(h, kh, stride)
        ow, pl, pr = same_padding(w, kw, stride)
    elif padding == "valid":
        if kh > h or kw > w:
            raise ShapeError(f"kernel {kh}x{kw} does not fit input {h}x{w}")
        oh, ow = (h - kh) // stride + 1, (w - kw) // stride + 1
        pt = pb = pl = pr = 0
    else:
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
    return oh, ow, (pt, pb, pl, pr)


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: str):
    """Patch matrix ``[n*oh*ow, kh*kw*c]`` (row-major over kh, kw, c)."""
    n, h, w, c = x.shape
    oh, ow, (pt, pb, pl, pr) = conv_geometry(h, w, kh, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride][:, :oh, :ow]  # [n, oh, ow, c, kh, kw]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * oh * ow, kh * kw * c)
    return cols, (oh, ow), (pt, pb, pl, pr), xp.shape


def col2im(dcols: np.ndarray, xp_shape, kh: int, kw: int, stride: int, oh: int, ow: int,
           pads) -> np.ndarray:
    n, hp, wp, c = xp_shape
    d = dcols.reshape(n, oh, ow, kh, kw, c)
    dx = np.zeros(xp_shape, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :] += d[:, :, :, i, j, :]
    pt, pb, pl, pr = pads
    return dx[:, pt:hp - pb, pl:wp - pr, :]


def conv2d(x: Tensor, k: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """Cross-correlation of ``x [n,h,w,cin]`` with ``k [kh,kw,cin,cout]`` via im2col."""
    x, k = constant(x), constant(k)
    if x.ndim != 4 or k.ndim != 4 or x.shape[3] != k.shape[2]:
        raise ShapeError(f"conv2d shapes {x.shape} and {k.shape} do not align")
    kh, kw, cin, cout = k.shape
    cols, (oh, ow), pads, xp_shape = im2col(x.data, kh, kw, stride, padding)
    kmat = k.data.reshape(kh * kw * cin, cout)
    out = (cols @ kmat).reshape(x.shape[0], oh, ow, cout)

    def back(g):
        g2 = g.reshape(-1, cout)
        dk = (cols.T @ g2).reshape(k.shape) if k.requires_grad else None
        dx = (col2im(g2 @ kmat.T, xp_shape, kh, kw, stride, oh, ow, pads)
              if x.requires_grad else None)
        return dx, dk
    return _node(out, (x, k), back, "conv2d")


def maxpool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """Max over ``window x window`` patches, no padding; ties go to the first index."""
    if window < 1 or stride < 1:
        raise ShapeError("window and stride must be >= 1")
    n, h, w, c = x.shape
    if window > h or window > w:
        raise ShapeError(f"pool window {window} larger than input {h}x{w}")
    oh, ow = (h - window) // stride + 1, (w - window) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, (window, window), axis=(1, 2))
    win = win[:, ::stride, ::stride][:, :oh, :ow].reshape(n, oh, ow, c, window * window)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def back(g):
        di, dj = np.divmod(arg, window)
        ni, oi, oj, ci = np.indices(arg.shape, sparse=True)
        rows = oi * stride + di
        cols = oj * stride + dj
        flat = ((ni * h + rows) * w + cols) * c + ci
        dx = np.bincount(flat.ravel(), weights=g.ravel(), minlength=x.size)
        return (dx.reshape(x.shape).astype(x.data.dtype),)
    return _node(np.ascontiguousarray(out), (x,), back, "maxpool2d")


# ---------------------------------------------------------------- losses

def _check_labels(labels, n: int, classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels must lie in [0, {classes})")
    return labels.astype(np.int64)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[label]``."""
    if logits.ndim != 2:
        raise ShapeError("logits must be [n, classes]")
    n, classes = logits.shape
    labels = _check_labels(labels, n, classes)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = np.mean(logsum - z[np.arange(n), labels])

    def back(g):
        p = softmax(logits.data)
        p[np.arange(n), labels] -= 1
        return (p * (g / n),)
    return _node(np.asarray(loss, dtype=logits.data.dtype), (logits,), back, "softmax_xent")


def sigmoid_cross_entropy(logits: Tensor, labels) -> Tensor:
    """One-vs-rest binary cross-entropy against one-hot labels, mean over batch."""
    n, classes = logits.shape
    labels = _check_labels(labels, n, classes)
    y = np.zeros_like(logits.data)
    y[np.arange(n), labels] = 1
    z = logits.data
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = per.sum() / n

    def back(g):
        return ((_sigmoid(z) - y) * (g / n),)
    return _node(np.asarray(loss, dtype=z.dtype), (logits,), back, "sigmoid_xent")


# ---------------------------------------------------------------- batch norm

def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5,
               mean: np.ndarray | None = None, var: np.ndarray | None = None):
    """Normalise over every axis but the last.

    With ``mean``/``var`` given they are used as constants (evaluation mode);
    otherwise biased batch statistics are computed and returned alongside the
    output so the caller can update running averages.
    """
    axes = tuple(range(x.ndim - 1))
    training = mean is None
    # statistics and the backward's cancelling sums are kept in at least 64-bit
    wide = np.promote_types(x.data.dtype, np.float64)
    xd = x.data.astype(wide)
    if training:
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
    inv = 1.0 / np.sqrt(np.asarray(var, dtype=wide) + eps)
    xhat = (xd - mean) * inv
    out = (xhat * gamma.data + beta.data).astype(x.data.dtype)
    m = x.size // x.shape[-1]

    def back(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data
        if training:
            dx = inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        else:
            dx = dxhat * inv
        return dx.astype(x.data.dtype), dgamma, dbeta
    return _node(out, (x, gamma, beta), back, "batch_norm"), mean, var


# ---------------------------------------------------------------- tape & backward

def tape(loss: Tensor) -> list[Tensor]:
    """Nodes reachable from ``loss`` in topological order (parents first)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf that requires it."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = tape(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=parent.data.dtype)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float | None = None,
               floor: float = 1e-8, reference: str = "auto", scale_floor: float | None = None) -> float:
    """Worst per-coordinate relative error between tape and central-difference gradients.

    ``f`` rebuilds the graph from the current parameter values on every call.
    The tape gradient is taken at the parameters' own precision; the central
    differences are evaluated at ``reference`` precision: ``"auto"`` picks the
    next wider type (r32 -> r64, r64 -> ext) and ``"same"`` keeps the
    parameters' own. Rounding of ``f`` divided by ``2 * eps`` otherwise swamps
    small gradient components (~1e-4 absolute at r32, ~1e-10 at r64).

    The error of a coordinate is ``|a - n| / max(|a|, |n|, floor, scale_floor * S)``
    with ``S`` the largest gradient magnitude of that parameter: components that
    are a cancellation residue far below ``S`` are judged on absolute error
    relative to ``S`` rather than to themselves. ``scale_floor`` defaults to
    1e-3 for float32 parameters (tape roundoff is a few ulps of ``S``) and 1e-6
    otherwise.
    """
    for p in params:
        if p.data.dtype not in _FLOATS:
            raise TypeError("grad_check needs floating parameters")
    zero_grad(params)
    out = f()
    if out.size != 1:
        raise ShapeError("grad_check needs a scalar-valued function")
    backward(out)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    if reference not in ("same", "auto", *_PRECISIONS):
        raise ValueError(f"reference must be 'same', 'auto' or one of {tuple(_PRECISIONS)}")
    if reference == "auto":
        reference = "r64" if params and params[0].data.dtype == np.float32 else "ext"
    originals = [p.data for p in params]
    ref = None if reference == "same" else _PRECISIONS[reference]
    if eps is None:
        # step size follows the precision the differences are taken in
        diff_dtype = np.dtype(ref) if ref is not None else (params[0].data.dtype if params else np.float64)
        eps = 1e-3 if diff_dtype == np.float32 else 1e-6
    if eps <= 0:
        raise ValueError("eps must be positive")
    if scale_floor is None:
        scale_floor = 1e-3 if params and params[0].data.dtype == np.float32 else 1e-6
    worst = 0.0
    try:
        with precision(reference) if ref is not None else contextlib.nullcontext():
            for p, ga in zip(params, analytic):
                base = p.data.astype(ref or p.data.dtype)
                num = np.zeros(base.shape)
                for idx in np.ndindex(base.shape):
                    work = base.copy()
                    work[idx] = base[idx] + eps
                    _set(p, work)
                    fp = f().data
                    work[idx] = base[idx] - eps
                    _set(p, work)
                    fm = f().data
                    num[idx] = float(((fp - fm) / (2 * eps)).reshape(()))
                _set(p, base)
                a = ga.astype(np.float64)
                if a.size:
                    scale = max(np.abs(a).max(), np.abs(num).max())
                    denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), max(floor, scale_floor * scale))
                    worst = max(worst, float((np.abs(a - num) / denom).max()))
    finally:
        for p, orig in zip(params, originals):
            p.data = orig
    zero_grad(params)
    return worst


def _set(p: Tensor, value: np.ndarray) -> None:
    value = value.copy()
    value.flags.writeable = False
    p.data = value
